#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmut/features/config.hpp"

namespace tmut {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { kIdentity, kSigmoid, kRelu };

inline constexpr double kReluBiasInit = 0.01;

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kRelu: return x > 0 ? x : 0.0;
    case Activation::kIdentity: return x;
  }
  return x;
}

// Derivative expressed through the activation output y (and pre-activation z for ReLU).
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kSigmoid: return y * (1.0 - y);
    case Activation::kRelu: return z > 0 ? 1.0 : 0.0;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

struct DenseLayer {
  std::size_t in = 0, out = 0;
  Vec w;  // out x in, row-major
  Vec b;  // out
  Activation act = Activation::kIdentity;
  bool operator==(const DenseLayer&) const = default;
};

// Fully connected feed-forward network. Gradients share the network's shape.
class DenseNet {
 public:
  struct Cache {
    std::vector<Vec> z;  // pre-activations per layer
    std::vector<Vec> a;  // a[0] = input, a[l+1] = output of layer l
  };

  DenseNet() = default;

  // Glorot-uniform weights. Biases start at zero except ReLU layers, which get a
  // small positive offset so that no unit sits exactly on the kink.
  template <class Rng>
  static DenseNet make(const std::vector<std::size_t>& sizes, Activation hidden, Activation output, Rng& rng) {
    if (sizes.size() < 2) throw ShapeMismatch("dense net needs at least an input and an output layer");
    DenseNet net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      DenseLayer L;
      L.in = sizes[l];
      L.out = sizes[l + 1];
      L.act = (l + 2 == sizes.size()) ? output : hidden;
      const double lim = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      std::uniform_real_distribution<double> u(-lim, lim);
      L.w.resize(L.in * L.out);
      for (auto& x : L.w) x = u(rng);
      L.b.assign(L.out, L.act == Activation::kRelu ? kReluBiasInit : 0.0);
      net.layers_.push_back(std::move(L));
    }
    return net;
  }

  // Same shape as `like`, all parameters zero.
  static DenseNet zeros_like(const DenseNet& like) {
    DenseNet g = like;
    for (auto& L : g.layers_) {
      std::fill(L.w.begin(), L.w.end(), 0.0);
      std::fill(L.b.begin(), L.b.end(), 0.0);
    }
    return g;
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.w.size() + L.b.size();
    return n;
  }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Vec forward(const Vec& x) const {
    if (x.size() != input_dim())
      throw ShapeMismatch("dense net: input width " + std::to_string(x.size()) + " != " + std::to_string(input_dim()));
    Vec cur = x;
    for (const auto& L : layers_) {
      Vec next(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = L.b[o];
        const double* row = L.w.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) s += row[i] * cur[i];
        next[o] = activate(L.act, s);
      }
      cur = std::move(next);
    }
    return cur;
  }

  Vec forward(const Vec& x, Cache& c) const {
    if (x.size() != input_dim()) throw ShapeMismatch("dense net: input width mismatch");
    c.z.assign(layers_.size(), {});
    c.a.assign(layers_.size() + 1, {});
    c.a[0] = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      Vec& z = c.z[l];
      Vec& a = c.a[l + 1];
      z.resize(L.out);
      a.resize(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = L.b[o];
        const double* row = L.w.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) s += row[i] * c.a[l][i];
        z[o] = s;
        a[o] = activate(L.act, s);
      }
    }
    return c.a.back();
  }

  // Accumulates dLoss/dparams into `grad` and returns dLoss/dinput.
  Vec backward(const Cache& c, const Vec& d_out, DenseNet& grad) const {
    Vec delta = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& L = layers_[l];
      auto& G = grad.layers_[l];
      for (std::size_t o = 0; o < L.out; ++o) delta[o] *= activate_grad(L.act, c.z[l][o], c.a[l + 1][o]);
      Vec d_in(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        G.b[o] += d;
        const double* row = L.w.data() + o * L.in;
        double* grow = G.w.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) {
          grow[i] += d * c.a[l][i];
          d_in[i] += d * row[i];
        }
      }
      delta = std::move(d_in);
    }
    return delta;
  }

  // this -= lr * grad
  void sgd_step(const DenseNet& grad, double lr) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& L = layers_[l];
      const auto& G = grad.layers_[l];
      for (std::size_t i = 0; i < L.w.size(); ++i) L.w[i] -= lr * G.w[i];
      for (std::size_t i = 0; i < L.b.size(); ++i) L.b[i] -= lr * G.b[i];
    }
  }

  Vec flat_params() const {
    Vec p;
    p.reserve(param_count());
    for (const auto& L : layers_) {
      p.insert(p.end(), L.w.begin(), L.w.end());
      p.insert(p.end(), L.b.begin(), L.b.end());
    }
    return p;
  }

  void set_flat_params(const Vec& p) {
    if (p.size() != param_count()) throw ShapeMismatch("dense net: parameter count mismatch");
    std::size_t k = 0;
    for (auto& L : layers_) {
      for (auto& x : L.w) x = p[k++];
      for (auto& x : L.b) x = p[k++];
    }
  }

  bool operator==(const DenseNet&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& L : layers_)
      j.push_back({{"in", L.in}, {"out", L.out}, {"act", static_cast<int>(L.act)}, {"w", L.w}, {"b", L.b}});
    return j;
  }

  static DenseNet from_json(const nlohmann::json& j) {
    DenseNet net;
    for (const auto& e : j) {
      DenseLayer L;
      L.in = e.at("in").get<std::size_t>();
      L.out = e.at("out").get<std::size_t>();
      L.act = static_cast<Activation>(e.at("act").get<int>());
      L.w = e.at("w").get<Vec>();
      L.b = e.at("b").get<Vec>();
      if (L.w.size() != L.in * L.out || L.b.size() != L.out) throw ShapeMismatch("dense net json: bad layer shape");
      if (!net.layers_.empty() && net.layers_.back().out != L.in) throw ShapeMismatch("dense net json: layers do not chain");
      net.layers_.push_back(std::move(L));
    }
    return net;
  }

 private:
  std::vector<DenseLayer> layers_;
};

inline double rmse(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeMismatch("rmse: length mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline double euclidean(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeMismatch("distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace tmut
