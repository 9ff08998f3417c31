#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "tmut/features/feature_io.hpp"
#include "tmut/metrics/metrics.hpp"
#include "tmut/models/detector.hpp"

namespace tmut {

using ScoreFn = std::function<double(const Vec&)>;

struct RobustnessScores {
  Vec s;
};

// Per-dimension mimicry ratio 1 - |fh_j - fa_j| / |f_j - fa_j|, clamped to
// [0, 1]; dimensions with a zero denominator give 0.
inline double dimension_mimicry(double f, double fh, double fa) {
  const double den = std::abs(f - fa);
  if (den < kMmrMinDistance) return 0.0;
  return std::clamp(1.0 - std::abs(fh - fa) / den, 0.0, 1.0);
}

// Penalize dimensions that moved toward the adversarial feature in pairs that
// evaded; reward the rest. Result is divided by the pair count.
inline RobustnessScores adversarial_feature_scores(const Matrix& f_mal, const Matrix& f_hat, const Matrix& adver,
                                                   const Matrix& /*ben*/, const ScoreFn& score, double h) {
  if (f_mal.size() != f_hat.size()) throw DimensionMismatch("feature scores: unpaired feature sets");
  if (f_mal.empty()) throw NoValidPairs("feature scores: no pairs");
  const std::size_t nd = f_mal.front().size();
  RobustnessScores out{Vec(nd, 0.0)};
  for (std::size_t i = 0; i < f_mal.size(); ++i) {
    const Vec& fa = adver[nearest_index(f_mal[i], adver)];
    const bool evaded = score(f_mal[i]) > h && score(f_hat[i]) < h;
    for (std::size_t j = 0; j < nd; ++j) {
      const double r = dimension_mimicry(f_mal[i][j], f_hat[i][j], fa[j]);
      out.s[j] += evaded ? -r : 1.0 - r;
    }
  }
  for (auto& v : out.s) v /= static_cast<double>(f_mal.size());
  return out;
}

inline std::size_t retained_count(std::size_t n, double retain) {
  if (!(retain > 0.0 && retain <= 1.0)) throw std::invalid_argument("retain fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(retain * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, n ? 1 : 0, n);
}

// Keeps the highest-ranked dimensions; ties go to the lower index.
inline DimMask top_k_mask(const Vec& rank, double retain) {
  const std::size_t k = retained_count(rank.size(), retain);
  std::vector<std::size_t> idx(rank.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rank[a] > rank[b]; });
  DimMask m(rank.size(), false);
  for (std::size_t i = 0; i < k; ++i) m[idx[i]] = true;
  return m;
}

inline DimMask afr_reduce(const RobustnessScores& scores, double retain) { return top_k_mask(scores.s, retain); }

inline std::vector<std::size_t> mask_indices(const DimMask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

inline Matrix apply_mask(const Matrix& rows, const DimMask& m) { return gather_rows(rows, mask_indices(m)); }

struct AdversarialTrainingResult {
  AnomalyDetector detector;
  Matrix held_out;  // 20% of F_adver, never seen in training
};

// Supervised kinds retrain on the union with 80% of F_adver labeled malicious.
// Score-only kinds cannot consume labels, so they keep the benign model and
// move h to the cut that best separates benign from the relabeled adversarial rows.
template <class Rng>
AdversarialTrainingResult adversarial_training(DetectorKind kind, const TrainingData& original, const Matrix& adver,
                                               const DetectorParams& params, Rng& rng, double percentile = 99.0) {
  if (adver.empty()) throw std::invalid_argument("adversarial training: empty adversarial feature set");
  std::vector<std::size_t> idx(adver.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(adver.size())));
  AdversarialTrainingResult res;
  Matrix adv_train;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_train ? adv_train : res.held_out).push_back(adver[idx[i]]);

  if (!is_unsupervised(kind)) {
    TrainingData d = original;
    for (const auto& r : adv_train) {
      d.X.push_back(r);
      d.y.push_back(1);
    }
    res.detector = train_detector(kind, d, params, rng);
    res.detector.threshold = 0.5;  // sigmoid decision boundary
    return res;
  }

  TrainingData benign_only{{}, {}};
  for (std::size_t i = 0; i < original.X.size(); ++i)
    if (original.y.empty() || original.y[i] == 0) benign_only.X.push_back(original.X[i]);
  res.detector = train_detector(kind, benign_only, params, rng);
  const Vec ben = res.detector.score_all(benign_only.X);
  double h = calibrate_threshold(ben, percentile);
  if (!adv_train.empty()) {
    const Vec adv = res.detector.score_all(adv_train);
    // Candidate cuts: the benign percentile and every adversarial score just below.
    Vec cuts{h};
    for (double a : adv) cuts.push_back(std::nextafter(a, -std::numeric_limits<double>::infinity()));
    double best_err = std::numeric_limits<double>::infinity();
    for (double c : cuts) {
      const double fpr = double(std::count_if(ben.begin(), ben.end(), [&](double s) { return s > c; })) / double(ben.size());
      const double fnr = double(std::count_if(adv.begin(), adv.end(), [&](double s) { return s <= c; })) / double(adv.size());
      const double err = 0.5 * (fpr + fnr);
      if (err < best_err - 1e-15 || (std::abs(err - best_err) <= 1e-15 && c > h)) {
        best_err = err;
        h = c;
      }
    }
  }
  res.detector.threshold = h;
  return res;
}

// L1-regularized logistic regression on min-max normalized inputs; dimensions
// ranked by |weight|.
template <class Rng>
DimMask feature_selection_l1(const TrainingData& data, double retain, Rng& rng, double l1 = 0.01,
                             std::size_t epochs = 50, double lr = 0.05) {
  if (data.X.empty() || data.y.size() != data.X.size()) throw DimensionMismatch("feature selection: labeled data required");
  const std::size_t nd = data.X.front().size();
  if (retained_count(nd, retain) == nd) return DimMask(nd, true);
  const Normalization norm = fit_normalization(data.X);
  const Classifier c = train_logistic(normalize_matrix(data.X, norm), data.y, epochs, lr, l1, rng);
  Vec mag(nd);
  for (std::size_t j = 0; j < nd; ++j) mag[j] = std::abs(c.net.layers()[0].w[j]);
  return top_k_mask(mag, retain);
}

inline std::string scores_to_csv(const RobustnessScores& s, const std::vector<std::string>& names = {}) {
  std::ostringstream os;
  os << "dim,name,score\n";
  for (std::size_t j = 0; j < s.s.size(); ++j)
    os << j << ',' << (j < names.size() ? names[j] : "") << ',' << format_double(s.s[j]) << '\n';
  return os.str();
}

}  // namespace tmut
