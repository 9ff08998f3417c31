#pragma once

#include <cmath>
#include <vector>

// Straight-line recomputations used as independent oracles.
namespace tmut::testing {

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const std::vector<int>& y, const std::vector<int>& p) {
  Confusion c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1 && p[i] == 1) c.tp += 1;
    else if (y[i] == 0 && p[i] == 1) c.fp += 1;
    else if (y[i] == 1 && p[i] == 0) c.fn += 1;
    else c.tn += 1;
  }
  return c;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt((double)s);
}

inline double oracle_mmr(const std::vector<std::vector<double>>& f, const std::vector<std::vector<double>>& fh,
                         const std::vector<std::vector<double>>& adv) {
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < adv.size(); ++a)
      if (dist(f[i], adv[a]) < dist(f[i], adv[best])) best = a;
    const double d0 = dist(f[i], adv[best]);
    if (d0 < 1e-12) continue;
    sum += dist(fh[i], adv[best]) / d0;
    ++n;
  }
  return 1.0 - sum / n;
}

}  // namespace tmut::testing
