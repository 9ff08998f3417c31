#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "tmut/models/clustering.hpp"
#include "tmut/models/dense.hpp"
#include "tmut/models/training.hpp"

namespace tmut {

struct EmptyTraining : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// n -> ceil(0.75 n) -> n, sigmoid throughout.
struct Autoencoder {
  DenseNet net;

  template <class Rng>
  static Autoencoder make(std::size_t n, Rng& rng) {
    const auto hidden = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(n))));
    return {DenseNet::make({n, hidden, n}, Activation::kSigmoid, Activation::kSigmoid, rng)};
  }

  double error(const Vec& x) const { return rmse(x, net.forward(x)); }
  double loss(const Matrix& X) const { return mean_loss(net, X, X, Loss::kHalfSquared); }

  template <class Rng>
  void train_epoch(const Matrix& X, double lr, Rng& rng) {
    sgd_epoch(net, X, X, Loss::kHalfSquared, lr, 1, rng);
  }
};

inline Vec gather(const Vec& x, const std::vector<std::size_t>& idx) {
  Vec out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = x[idx[i]];
  return out;
}

inline Matrix gather_rows(const Matrix& X, const std::vector<std::size_t>& idx) {
  Matrix out;
  out.reserve(X.size());
  for (const auto& r : X) out.push_back(gather(r, idx));
  return out;
}

// KitNET-style ensemble: one small autoencoder per correlated feature group,
// and an output autoencoder over the min-max scaled group errors.
class EnsembleAutoencoder {
 public:
  Grouping groups;
  std::vector<Autoencoder> members;
  Autoencoder output;
  Vec err_min, err_max;

  template <class Rng>
  static EnsembleAutoencoder train(const Matrix& X, std::size_t m_max, std::size_t epochs, double lr, Rng& rng) {
    if (X.size() < 2) throw EmptyTraining("ensemble autoencoder: need at least 2 samples");
    EnsembleAutoencoder e;
    e.groups = feature_group(X, m_max);
    std::vector<Matrix> parts;
    for (const auto& g : e.groups) {
      e.members.push_back(Autoencoder::make(g.size(), rng));
      parts.push_back(gather_rows(X, g));
    }
    for (std::size_t ep = 0; ep < epochs; ++ep)
      for (std::size_t k = 0; k < e.members.size(); ++k) e.members[k].train_epoch(parts[k], lr, rng);

    Matrix errs;
    errs.reserve(X.size());
    for (const auto& x : X) errs.push_back(e.raw_errors(x));
    e.err_min.assign(e.groups.size(), std::numeric_limits<double>::infinity());
    e.err_max.assign(e.groups.size(), -std::numeric_limits<double>::infinity());
    for (const auto& r : errs)
      for (std::size_t k = 0; k < r.size(); ++k) {
        e.err_min[k] = std::min(e.err_min[k], r[k]);
        e.err_max[k] = std::max(e.err_max[k], r[k]);
      }
    Matrix scaled;
    scaled.reserve(errs.size());
    for (const auto& r : errs) scaled.push_back(e.scale(r));
    e.output = Autoencoder::make(e.groups.size(), rng);
    for (std::size_t ep = 0; ep < epochs; ++ep) e.output.train_epoch(scaled, lr, rng);
    return e;
  }

  Vec raw_errors(const Vec& x) const {
    Vec r(groups.size());
    for (std::size_t k = 0; k < groups.size(); ++k) r[k] = members[k].error(gather(x, groups[k]));
    return r;
  }

  // Not clipped: errors above the training maximum stay above 1.
  Vec scale(const Vec& r) const {
    Vec s(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double span = err_max[k] - err_min[k];
      s[k] = span > 1e-12 ? (r[k] - err_min[k]) / span : r[k] - err_min[k];
    }
    return s;
  }

  double score(const Vec& x) const { return output.error(scale(raw_errors(x))); }

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& a : members) m.push_back(a.net.to_json());
    return {{"groups", groups}, {"members", m}, {"output", output.net.to_json()}, {"err_min", err_min}, {"err_max", err_max}};
  }
  static EnsembleAutoencoder from_json(const nlohmann::json& j) {
    EnsembleAutoencoder e;
    e.groups = j.at("groups").get<Grouping>();
    for (const auto& m : j.at("members")) e.members.push_back({DenseNet::from_json(m)});
    e.output = {DenseNet::from_json(j.at("output"))};
    e.err_min = j.at("err_min").get<Vec>();
    e.err_max = j.at("err_max").get<Vec>();
    return e;
  }
};

// Sigmoid-output binary classifiers trained with cross-entropy.
struct Classifier {
  DenseNet net;
  double score(const Vec& x) const { return net.forward(x)[0]; }
};

inline Matrix label_targets(const std::vector<int>& y) {
  Matrix t;
  t.reserve(y.size());
  for (int v : y) t.push_back({v ? 1.0 : 0.0});
  return t;
}

template <class Rng>
Classifier train_mlp(const Matrix& X, const std::vector<int>& y, std::size_t epochs, double lr, Rng& rng) {
  if (X.empty()) throw EmptyTraining("mlp: no samples");
  Classifier c{DenseNet::make({X.front().size(), 32, 16, 1}, Activation::kRelu, Activation::kSigmoid, rng)};
  const Matrix t = label_targets(y);
  for (std::size_t ep = 0; ep < epochs; ++ep) sgd_epoch(c.net, X, t, Loss::kBinaryCrossEntropy, lr, 1, rng);
  return c;
}

// Logistic regression; l1 > 0 applies a proximal soft-threshold after every step.
template <class Rng>
Classifier train_logistic(const Matrix& X, const std::vector<int>& y, std::size_t epochs, double lr, double l1, Rng& rng) {
  if (X.empty()) throw EmptyTraining("logistic regression: no samples");
  Classifier c{DenseNet::make({X.front().size(), 1}, Activation::kIdentity, Activation::kSigmoid, rng)};
  std::fill(c.net.layers()[0].w.begin(), c.net.layers()[0].w.end(), 0.0);
  const Matrix t = label_targets(y);
  std::vector<std::size_t> order(X.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  DenseNet::Cache cache;
  for (std::size_t ep = 0; ep < epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      DenseNet g = DenseNet::zeros_like(c.net);
      const Vec out = c.net.forward(X[i], cache);
      c.net.backward(cache, loss_grad(Loss::kBinaryCrossEntropy, out, t[i]), g);
      c.net.sgd_step(g, lr);
      if (l1 > 0.0)
        for (auto& w : c.net.layers()[0].w) w = std::copysign(std::max(0.0, std::abs(w) - lr * l1), w);
    }
  }
  return c;
}

// Isolation forest with the standard average-path-length normalization.
class IsolationForest {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    std::size_t size = 0;
  };
  using Tree = std::vector<Node>;

  std::vector<Tree> trees;
  std::size_t subsample = 256;

  static double harmonic(double i) { return std::log(i) + 0.5772156649015329; }
  // Average unsuccessful-search path length in a BST of n points.
  static double c(double n) {
    if (n <= 1.0) return 0.0;
    if (n == 2.0) return 1.0;
    return 2.0 * harmonic(n - 1.0) - 2.0 * (n - 1.0) / n;
  }

  template <class Rng>
  static IsolationForest train(const Matrix& X, std::size_t n_trees, std::size_t subsample, Rng& rng) {
    if (X.size() < 2) throw EmptyTraining("isolation forest: need at least 2 samples");
    IsolationForest f;
    f.subsample = std::min(subsample, X.size());
    const auto depth_limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(f.subsample))));
    std::vector<std::size_t> all(X.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t t = 0; t < n_trees; ++t) {
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<std::size_t> sample(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(f.subsample));
      Tree tree;
      grow(tree, X, sample, 0, depth_limit, rng);
      f.trees.push_back(std::move(tree));
    }
    return f;
  }

  double path_length(const Tree& tree, const Vec& x) const {
    int n = 0;
    double depth = 0.0;
    while (tree[static_cast<std::size_t>(n)].feature >= 0) {
      const Node& nd = tree[static_cast<std::size_t>(n)];
      n = x[static_cast<std::size_t>(nd.feature)] < nd.split ? nd.left : nd.right;
      depth += 1.0;
    }
    return depth + c(static_cast<double>(tree[static_cast<std::size_t>(n)].size));
  }

  double score(const Vec& x) const {
    double h = 0.0;
    for (const auto& t : trees) h += path_length(t, x);
    h /= static_cast<double>(trees.size());
    return std::exp2(-h / c(static_cast<double>(subsample)));
  }

  nlohmann::json to_json() const {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : trees) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : t) nodes.push_back({n.feature, n.split, n.left, n.right, n.size});
      ts.push_back(nodes);
    }
    return {{"subsample", subsample}, {"trees", ts}};
  }
  static IsolationForest from_json(const nlohmann::json& j) {
    IsolationForest f;
    f.subsample = j.at("subsample").get<std::size_t>();
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& n : t)
        tree.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<int>(), n[3].get<int>(), n[4].get<std::size_t>()});
      f.trees.push_back(std::move(tree));
    }
    return f;
  }

 private:
  template <class Rng>
  static int grow(Tree& tree, const Matrix& X, const std::vector<std::size_t>& idx, std::size_t depth,
                  std::size_t limit, Rng& rng) {
    const int id = static_cast<int>(tree.size());
    tree.push_back({-1, 0.0, -1, -1, idx.size()});
    if (idx.size() <= 1 || depth >= limit) return id;
    const std::size_t d = X.front().size();
    std::vector<std::size_t> usable;
    Vec lo(d), hi(d);
    for (std::size_t j = 0; j < d; ++j) {
      lo[j] = hi[j] = X[idx[0]][j];
      for (std::size_t i : idx) {
        lo[j] = std::min(lo[j], X[i][j]);
        hi[j] = std::max(hi[j], X[i][j]);
      }
      if (hi[j] > lo[j]) usable.push_back(j);
    }
    if (usable.empty()) return id;
    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    const std::size_t f = usable[pick(rng)];
    std::uniform_real_distribution<double> u(lo[f], hi[f]);
    double split = u(rng);
    if (split <= lo[f]) split = std::nextafter(lo[f], hi[f]);
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (X[i][f] < split ? l : r).push_back(i);
    const int li = grow(tree, X, l, depth + 1, limit, rng);
    const int ri = grow(tree, X, r, depth + 1, limit, rng);
    tree[static_cast<std::size_t>(id)].feature = static_cast<int>(f);
    tree[static_cast<std::size_t>(id)].split = split;
    tree[static_cast<std::size_t>(id)].left = li;
    tree[static_cast<std::size_t>(id)].right = ri;
    return id;
  }
};

}  // namespace tmut
