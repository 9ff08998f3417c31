#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tmut {

struct TimeRegression : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kTimeRegressionTolerance = 1e-9;

// Exponentially damped weight / linear sum / squared sum. Every sample
// loses half its weight each 1/lambda seconds. A damped Welford pair
// (mu, m2) runs alongside so the variance avoids ss/w - mean^2 cancellation.
struct DampedStat {
  double w = 0.0;
  double ls = 0.0;
  double ss = 0.0;
  double last_t = 0.0;
  double lambda = 1.0;
  double mu = 0.0;
  double m2 = 0.0;

  DampedStat() = default;
  explicit DampedStat(double lam) : lambda(lam) {}

  static double factor(double lambda, double dt) { return std::exp2(-lambda * dt); }

  void decay_to(double t) {
    if (t < last_t - kTimeRegressionTolerance) throw TimeRegression("damped stat: time went backwards");
    if (w == 0.0) {
      last_t = std::max(last_t, t);
      return;
    }
    const double dt = t - last_t;
    if (dt > 0.0) {
      const double f = factor(lambda, dt);
      w *= f;
      ls *= f;
      ss *= f;
      m2 *= f;
      last_t = t;
    }
  }

  void update(double t, double v) {
    decay_to(t);
    if (w == 0.0) {
      *this = DampedStat(lambda);
      last_t = t;
    }
    w += 1.0;
    ls += v;
    ss += v * v;
    const double delta = v - mu;
    mu += delta / w;
    m2 += delta * (v - mu);
  }

  // Weight as seen at time t without mutating the stat.
  double weight_at(double t) const {
    if (w == 0.0 || t <= last_t) return w;
    return w * factor(lambda, t - last_t);
  }

  double mean() const { return w > 0.0 ? mu : 0.0; }
  double variance() const { return w > 0.0 ? std::max(0.0, m2 / w) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  // Raw estimate, kept for the invariant check (may dip below zero by rounding).
  double raw_variance() const { return w > 0.0 ? ss / w - (ls / w) * (ls / w) : 0.0; }
};

inline DampedStat damped_update(DampedStat s, double t, double v) {
  s.update(t, v);
  return s;
}

}  // namespace tmut
