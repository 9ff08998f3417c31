#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmut/features/config.hpp"
#include "tmut/models/dense.hpp"

namespace tmut {

struct ZeroPositives : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoValidPairs : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double der(std::size_t pos, std::size_t pos_hat) {
  if (pos == 0) throw ZeroPositives("der: no originally detected packets");
  return 1.0 - static_cast<double>(pos_hat) / static_cast<double>(pos);
}

inline double mer(std::size_t pos, std::size_t pos_hat_mal) {
  if (pos == 0) throw ZeroPositives("mer: no originally detected packets");
  return 1.0 - static_cast<double>(pos_hat_mal) / static_cast<double>(pos);
}

// 1 - mean C(f_hat)/C(f) over pairs with C(f) > 0.
inline double pdr(const Vec& orig_scores, const Vec& mutated_scores, std::size_t* skipped = nullptr) {
  if (orig_scores.size() != mutated_scores.size()) throw DimensionMismatch("pdr: unpaired score sets");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < orig_scores.size(); ++i) {
    if (!(orig_scores[i] > 0.0)) continue;
    s += mutated_scores[i] / orig_scores[i];
    ++n;
  }
  if (skipped) *skipped = orig_scores.size() - n;
  if (n == 0) throw NoValidPairs("pdr: no pair with a positive original score");
  return 1.0 - s / static_cast<double>(n);
}

inline std::size_t nearest_index(const Vec& f, const Matrix& set) {
  if (set.empty()) throw std::invalid_argument("nearest_index: empty set");
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double d = euclidean(f, set[i]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

inline constexpr double kMmrMinDistance = 1e-12;

// 1 - mean L(f_hat, f_a)/L(f, f_a), f_a the adversarial feature nearest to f.
inline double mmr(const Matrix& f_mal, const Matrix& f_hat, const Matrix& adver, std::size_t* skipped = nullptr) {
  if (f_mal.size() != f_hat.size()) throw DimensionMismatch("mmr: unpaired feature sets");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f_mal.size(); ++i) {
    const Vec& fa = adver[nearest_index(f_mal[i], adver)];
    const double d0 = euclidean(f_mal[i], fa);
    if (d0 < kMmrMinDistance) continue;
    s += euclidean(f_hat[i], fa) / d0;
    ++n;
  }
  if (skipped) *skipped = f_mal.size() - n;
  if (n == 0) throw NoValidPairs("mmr: every original already coincides with an adversarial feature");
  return 1.0 - s / static_cast<double>(n);
}

struct Prf1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Labels and predictions are 1 = malicious. Zero divisions yield 0 and a warning on stderr.
inline Prf1 prf1(const std::vector<int>& labels, const std::vector<int>& preds, bool warn = true) {
  if (labels.size() != preds.size()) throw DimensionMismatch("prf1: length mismatch");
  Prf1 r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] != 0, p = preds[i] != 0;
    r.tp += y && p;
    r.fp += !y && p;
    r.fn += y && !p;
    r.tn += !y && !p;
  }
  auto ratio = [&](double a, double b, const char* what) {
    if (b > 0.0) return a / b;
    if (warn) std::fprintf(stderr, "warning: %s undefined (zero division), reported as 0\n", what);
    return 0.0;
  };
  r.precision = ratio(double(r.tp), double(r.tp + r.fp), "precision");
  r.recall = ratio(double(r.tp), double(r.tp + r.fn), "recall");
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall, "f1");
  return r;
}

struct EvaluationReport {
  std::size_t pos = 0, pos_hat = 0, pos_hat_mal = 0, pos_hat_craft = 0;
  double der = 0.0, mer = 0.0, pdr = 0.0, mmr = 0.0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"pos", pos}, {"pos_hat", pos_hat}, {"pos_hat_mal", pos_hat_mal}, {"pos_hat_craft", pos_hat_craft},
            {"der", der}, {"mer", mer}, {"pdr", pdr}, {"mmr", mmr}, {"precision", precision}, {"recall", recall},
            {"f1", f1}, {"meta", meta}};
  }
  static EvaluationReport from_json(const nlohmann::json& j) {
    EvaluationReport r;
    r.pos = j.at("pos");
    r.pos_hat = j.at("pos_hat");
    r.pos_hat_mal = j.at("pos_hat_mal");
    r.pos_hat_craft = j.at("pos_hat_craft");
    r.der = j.at("der");
    r.mer = j.at("mer");
    r.pdr = j.at("pdr");
    r.mmr = j.at("mmr");
    r.precision = j.at("precision");
    r.recall = j.at("recall");
    r.f1 = j.at("f1");
    r.meta = j.value("meta", nlohmann::json::object());
    return r;
  }
};

}  // namespace tmut
