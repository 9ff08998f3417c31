#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "tmut/models/dense.hpp"
#include "tmut/models/training.hpp"

namespace tmut {

struct EmptyResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// kPaper follows log D(G) literally; it saturates once D is confident.
// kNonSaturating swaps that term for -log(1 - D(G)) with the same optimum.
enum class GeneratorObjective { kPaper, kNonSaturating };

struct GanConfig {
  GeneratorObjective objective = GeneratorObjective::kNonSaturating;
  std::size_t noise_dim = 16;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  double lr = 0.01;
  std::uint64_t seed = 1;

  void validate() const {
    if (noise_dim < 1) throw std::invalid_argument("gan: noise_dim must be >= 1");
    if (batch < 1) throw std::invalid_argument("gan: batch must be >= 1");
  }
};

struct FeatureSets {
  Matrix mal, ben, gen, adver;

  std::size_t dims() const {
    std::size_t d = 0;
    for (const Matrix* m : {&mal, &ben, &gen, &adver})
      for (const auto& r : *m) {
        if (d == 0) d = r.size();
        else if (r.size() != d) throw DimensionMismatch("feature sets disagree on dimensionality");
      }
    return d;
  }
};

struct Gan {
  DenseNet generator;
  DenseNet discriminator;
  std::size_t noise_dim = 16;

  // (n_d + noise) -> 64 -> 64 -> n_d and n_d -> 64 -> 32 -> 1.
  template <class Rng>
  static Gan make(std::size_t n_d, std::size_t noise_dim, Rng& rng) {
    Gan g;
    g.noise_dim = noise_dim;
    g.generator = DenseNet::make({n_d + noise_dim, 64, 64, n_d}, Activation::kRelu, Activation::kSigmoid, rng);
    g.discriminator = DenseNet::make({n_d, 64, 32, 1}, Activation::kRelu, Activation::kSigmoid, rng);
    return g;
  }

  double discriminate(const Vec& f) const { return discriminator.forward(f)[0]; }

  nlohmann::json to_json() const {
    return {{"noise_dim", noise_dim}, {"generator", generator.to_json()}, {"discriminator", discriminator.to_json()}};
  }
  static Gan from_json(const nlohmann::json& j) {
    Gan g;
    g.noise_dim = j.at("noise_dim").get<std::size_t>();
    g.generator = DenseNet::from_json(j.at("generator"));
    g.discriminator = DenseNet::from_json(j.at("discriminator"));
    return g;
  }
};

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Vec generator_forward(const DenseNet& g, const Vec& f, const Vec& z) {
  if (f.size() + z.size() != g.input_dim()) throw ShapeMismatch("generator: |f| + |z| does not match input width");
  return g.forward(concat(f, z));
}

template <class Rng>
Vec draw_noise(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec z(n);
  for (auto& v : z) v = g(rng);
  return z;
}

// Only the lower end is clamped so that D = 1 gives exactly log 1 = 0.
inline double safe_log_d(double d) { return std::log(std::max(d, kProbClamp)); }

// Mean over the batch of log D(G(f,z)) + RMSE(f, G(f,z)).
inline double generator_loss(const Gan& gan, const Matrix& F, const Matrix& Z) {
  double s = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    const Vec g = generator_forward(gan.generator, F[i], Z[i]);
    s += safe_log_d(gan.discriminate(g)) + rmse(F[i], g);
  }
  return F.empty() ? 0.0 : s / static_cast<double>(F.size());
}

// The quantity the generator actually descends under `obj`.
inline double generator_objective_loss(const Gan& gan, const Matrix& F, const Matrix& Z, GeneratorObjective obj) {
  if (obj == GeneratorObjective::kPaper) return generator_loss(gan, F, Z);
  double s = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    const Vec g = generator_forward(gan.generator, F[i], Z[i]);
    s += -std::log(std::max(1.0 - gan.discriminate(g), kProbClamp)) + rmse(F[i], g);
  }
  return F.empty() ? 0.0 : s / static_cast<double>(F.size());
}

// -mean log(1 - D(ben)) - mean log D(gen), D clamped to [1e-7, 1 - 1e-7].
inline double discriminator_loss(const DenseNet& d, const Matrix& ben, const Matrix& gen) {
  if (ben.empty() || gen.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
  const Vec zero{0.0}, one{1.0};
  double lb = 0.0, lg = 0.0;
  for (const auto& f : ben) lb += sample_loss(Loss::kBinaryCrossEntropy, d.forward(f), zero);
  for (const auto& f : gen) lg += sample_loss(Loss::kBinaryCrossEntropy, d.forward(f), one);
  return lb / static_cast<double>(ben.size()) + lg / static_cast<double>(gen.size());
}

inline DenseNet discriminator_grad(const DenseNet& d, const Matrix& ben, const Matrix& gen) {
  DenseNet grad = DenseNet::zeros_like(d);
  DenseNet::Cache c;
  const Vec zero{0.0}, one{1.0};
  auto accumulate = [&](const Matrix& batch, const Vec& target) {
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& f : batch) {
      Vec g = loss_grad(Loss::kBinaryCrossEntropy, d.forward(f, c), target);
      g[0] *= w;
      d.backward(c, g, grad);
    }
  };
  accumulate(ben, zero);
  accumulate(gen, one);
  return grad;
}

// Gradient of the generator objective w.r.t. the generator parameters; D is held fixed.
inline DenseNet generator_grad(const Gan& gan, const Matrix& F, const Matrix& Z,
                               GeneratorObjective obj = GeneratorObjective::kPaper) {
  DenseNet grad = DenseNet::zeros_like(gan.generator);
  DenseNet d_scratch = DenseNet::zeros_like(gan.discriminator);
  DenseNet::Cache gc, dc;
  const double w = 1.0 / static_cast<double>(F.size());
  for (std::size_t i = 0; i < F.size(); ++i) {
    const Vec g = gan.generator.forward(concat(F[i], Z[i]), gc);
    const double p = gan.discriminator.forward(g, dc)[0];
    // d/dD of the adversarial term, zero where the clamp is active.
    const Vec d_p{obj == GeneratorObjective::kPaper ? (p > kProbClamp ? w / p : 0.0)
                                                     : (1.0 - p > kProbClamp ? w / (1.0 - p) : 0.0)};
    Vec d_g = gan.discriminator.backward(dc, d_p, d_scratch);
    const double r = rmse(F[i], g);
    if (r > 0.0) {
      const double k = w / (static_cast<double>(g.size()) * r);
      for (std::size_t j = 0; j < g.size(); ++j) d_g[j] += k * (g[j] - F[i][j]);
    }
    gan.generator.backward(gc, d_g, grad);
  }
  return grad;
}

struct GanHistory {
  Vec d_loss, g_loss;  // per-epoch batch means
};

struct GanResult {
  Gan gan;
  GanHistory history;
};

template <class Rng>
Matrix draw_noise_batch(std::size_t n, std::size_t dim, Rng& rng) {
  Matrix Z;
  Z.reserve(n);
  for (std::size_t i = 0; i < n; ++i) Z.push_back(draw_noise(dim, rng));
  return Z;
}

// Alternating SGD: per malicious batch one discriminator step then one generator step.
inline GanResult train_gan(const Matrix& mal, const Matrix& ben, const GanConfig& cfg) {
  cfg.validate();
  if (mal.empty() || ben.empty()) throw std::invalid_argument("train_gan: empty feature set");
  const std::size_t n_d = mal.front().size();
  for (const Matrix* m : {&mal, &ben})
    for (const auto& r : *m)
      if (r.size() != n_d) throw DimensionMismatch("train_gan: inconsistent feature width");

  std::mt19937_64 rng(cfg.seed);
  GanResult res{Gan::make(n_d, cfg.noise_dim, rng), {}};
  Gan& gan = res.gan;
  std::vector<std::size_t> mi(mal.size()), bi(ben.size());
  std::iota(mi.begin(), mi.end(), std::size_t{0});
  std::iota(bi.begin(), bi.end(), std::size_t{0});
  std::size_t bpos = bi.size();

  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(mi.begin(), mi.end(), rng);
    double dsum = 0.0, gsum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < mi.size(); start += cfg.batch) {
      const std::size_t end = std::min(mi.size(), start + cfg.batch);
      Matrix F, B;
      for (std::size_t k = start; k < end; ++k) {
        F.push_back(mal[mi[k]]);
        if (bpos == bi.size()) {
          std::shuffle(bi.begin(), bi.end(), rng);
          bpos = 0;
        }
        B.push_back(ben[bi[bpos++]]);
      }
      const Matrix Z = draw_noise_batch(F.size(), cfg.noise_dim, rng);
      Matrix G;
      for (std::size_t i = 0; i < F.size(); ++i) G.push_back(generator_forward(gan.generator, F[i], Z[i]));
      dsum += discriminator_loss(gan.discriminator, B, G);
      gan.discriminator.sgd_step(discriminator_grad(gan.discriminator, B, G), cfg.lr);
      gsum += generator_loss(gan, F, Z);
      gan.generator.sgd_step(generator_grad(gan, F, Z, cfg.objective), cfg.lr);
      ++batches;
    }
    res.history.d_loss.push_back(dsum / static_cast<double>(batches));
    res.history.g_loss.push_back(gsum / static_cast<double>(batches));
  }
  return res;
}

struct GenerateOptions {
  std::size_t n_per = 1;
  std::size_t max_total = 0;  // 0 = no cap
  bool allow_empty = false;   // permits n_per = 0
  double accept_below = 0.5;
};

// Draws n_per candidates per malicious feature and keeps those the
// discriminator scores as benign.
template <class Rng>
Matrix generate_adversarial(const Gan& gan, const Matrix& mal, const GenerateOptions& opt, Rng& rng) {
  if (opt.n_per == 0) {
    if (!opt.allow_empty) throw std::invalid_argument("generate_adversarial: n_per = 0 requires allow_empty");
    return {};
  }
  Matrix out;
  for (const auto& f : mal)
    for (std::size_t k = 0; k < opt.n_per; ++k) {
      Vec g = generator_forward(gan.generator, f, draw_noise(gan.noise_dim, rng));
      if (gan.discriminate(g) < opt.accept_below) out.push_back(std::move(g));
      if (opt.max_total && out.size() >= opt.max_total) return out;
    }
  if (out.empty()) throw EmptyResult("generate_adversarial: no generated feature passed the discriminator filter");
  return out;
}

}  // namespace tmut
