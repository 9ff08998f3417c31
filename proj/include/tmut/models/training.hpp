#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tmut/models/dense.hpp"

namespace tmut {

enum class Loss { kHalfSquared, kBinaryCrossEntropy };

inline constexpr double kProbClamp = 1e-7;

inline double sample_loss(Loss loss, const Vec& out, const Vec& target) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (loss == Loss::kHalfSquared) {
      s += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    } else {
      const double p = std::clamp(out[i], kProbClamp, 1.0 - kProbClamp);
      s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
  }
  return s;
}

// dLoss/dOutput for one sample.
inline Vec loss_grad(Loss loss, const Vec& out, const Vec& target) {
  Vec g(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (loss == Loss::kHalfSquared) {
      g[i] = out[i] - target[i];
    } else {
      const double p = std::clamp(out[i], kProbClamp, 1.0 - kProbClamp);
      g[i] = (p - target[i]) / (p * (1.0 - p));
    }
  }
  return g;
}

inline double mean_loss(const DenseNet& net, const Matrix& X, const Matrix& Y, Loss loss) {
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += sample_loss(loss, net.forward(X[i]), Y[i]);
  return X.empty() ? 0.0 : s / static_cast<double>(X.size());
}

// One shuffled pass of mini-batch SGD; batch gradients are averaged.
template <class Rng>
void sgd_epoch(DenseNet& net, const Matrix& X, const Matrix& Y, Loss loss, double lr, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(X.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  batch = std::max<std::size_t>(1, batch);
  DenseNet grad = DenseNet::zeros_like(net);
  DenseNet::Cache cache;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    grad = DenseNet::zeros_like(net);
    for (std::size_t k = start; k < end; ++k) {
      const auto& x = X[order[k]];
      const Vec out = net.forward(x, cache);
      net.backward(cache, loss_grad(loss, out, Y[order[k]]), grad);
    }
    net.sgd_step(grad, lr / static_cast<double>(end - start));
  }
}

}  // namespace tmut
