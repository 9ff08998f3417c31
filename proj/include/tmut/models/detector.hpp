#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tmut/features/normalize.hpp"
#include "tmut/models/models.hpp"

namespace tmut {

enum class DetectorKind { kEnsembleAutoencoder, kMlp, kLogistic, kIsolationForest };
enum class Verdict { kBenign, kMalicious };

inline bool is_unsupervised(DetectorKind k) {
  return k == DetectorKind::kEnsembleAutoencoder || k == DetectorKind::kIsolationForest;
}

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::kEnsembleAutoencoder: return "kitnet";
    case DetectorKind::kMlp: return "mlp";
    case DetectorKind::kLogistic: return "lr";
    case DetectorKind::kIsolationForest: return "iforest";
  }
  return "?";
}

inline DetectorKind detector_kind_from_string(const std::string& s) {
  if (s == "kitnet") return DetectorKind::kEnsembleAutoencoder;
  if (s == "mlp") return DetectorKind::kMlp;
  if (s == "lr") return DetectorKind::kLogistic;
  if (s == "iforest") return DetectorKind::kIsolationForest;
  throw std::invalid_argument("unknown detector kind: " + s);
}

struct DetectorParams {
  std::size_t m_max = 10;
  std::size_t epochs = 10;
  double lr = 0.01;
  double l1 = 0.0;
  std::size_t n_trees = 100;
  std::size_t subsample = 256;
};

// Raw feature rows plus labels (1 = malicious). Unsupervised kinds ignore labels
// and must be given benign rows only.
struct TrainingData {
  Matrix X;
  std::vector<int> y;
};

using DetectorModel = std::variant<EnsembleAutoencoder, Classifier, IsolationForest>;

// Score-and-threshold detector over raw feature vectors of a fixed width.
// Inputs are min-max scaled with bounds fitted on the training rows. Unlike
// normalize() the result is not clipped, so a value far outside the training
// range stays far outside it and the models can react to it.
class AnomalyDetector {
 public:
  DetectorKind kind = DetectorKind::kEnsembleAutoencoder;
  Normalization norm;
  std::shared_ptr<const DetectorModel> model;
  double threshold = 0.0;

  std::size_t dims() const { return norm.min.size(); }

  Vec prepare(const Vec& raw) const {
    if (raw.size() != dims())
      throw DimensionMismatch("detector expects " + std::to_string(dims()) + " dims, got " + std::to_string(raw.size()));
    Vec x(raw.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double span = norm.max[j] - norm.min[j];
      x[j] = span > kConstantSpan ? (raw[j] - norm.min[j]) / span : 0.0;
    }
    return x;
  }

  double score_normalized(const Vec& x) const {
    return std::visit([&](const auto& m) { return m.score(x); }, *model);
  }
  double score(const Vec& raw) const { return score_normalized(prepare(raw)); }
  Verdict predict(const Vec& raw) const { return score(raw) > threshold ? Verdict::kMalicious : Verdict::kBenign; }

  Vec score_all(const Matrix& rows) const {
    Vec s;
    s.reserve(rows.size());
    for (const auto& r : rows) s.push_back(score(r));
    return s;
  }

  nlohmann::json to_json() const;
  static AnomalyDetector from_json(const nlohmann::json& j);
};

template <class Rng>
AnomalyDetector train_detector(DetectorKind kind, const TrainingData& data, const DetectorParams& p, Rng& rng) {
  if (data.X.empty()) throw EmptyTraining("train_detector: no training rows");
  const std::size_t d = data.X.front().size();
  if (d == 0) throw DimensionMismatch("train_detector: zero-width rows");
  for (const auto& r : data.X)
    if (r.size() != d) throw DimensionMismatch("train_detector: ragged training rows");
  if (!is_unsupervised(kind) && data.y.size() != data.X.size())
    throw DimensionMismatch("train_detector: label count does not match rows");
  if (data.X.size() < 2) throw EmptyTraining("train_detector: need at least 2 rows");

  AnomalyDetector det;
  det.kind = kind;
  det.norm = fit_normalization(data.X);
  const Matrix X = normalize_matrix(data.X, det.norm);
  switch (kind) {
    case DetectorKind::kEnsembleAutoencoder:
      det.model = std::make_shared<DetectorModel>(EnsembleAutoencoder::train(X, p.m_max, p.epochs, p.lr, rng));
      break;
    case DetectorKind::kMlp:
      det.model = std::make_shared<DetectorModel>(train_mlp(X, data.y, p.epochs, p.lr, rng));
      break;
    case DetectorKind::kLogistic:
      det.model = std::make_shared<DetectorModel>(train_logistic(X, data.y, p.epochs, p.lr, p.l1, rng));
      break;
    case DetectorKind::kIsolationForest:
      det.model = std::make_shared<DetectorModel>(IsolationForest::train(X, p.n_trees, p.subsample, rng));
      break;
  }
  return det;
}

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest score.
inline double calibrate_threshold(Vec scores, double percentile = 99.0) {
  if (scores.size() < 10) throw std::invalid_argument("calibrate_threshold: need at least 10 scores");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument("calibrate_threshold: percentile out of (0, 100]");
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, scores.size());
  return scores[rank - 1];
}

inline double calibrate_threshold(AnomalyDetector& det, const Matrix& benign_val, double percentile = 99.0) {
  det.threshold = calibrate_threshold(det.score_all(benign_val), percentile);
  return det.threshold;
}

inline nlohmann::json AnomalyDetector::to_json() const {
  nlohmann::json m;
  if (const auto* e = std::get_if<EnsembleAutoencoder>(model.get())) m = e->to_json();
  else if (const auto* c = std::get_if<Classifier>(model.get())) m = c->net.to_json();
  else m = std::get<IsolationForest>(*model).to_json();
  return {{"kind", to_string(kind)}, {"threshold", threshold}, {"normalization", tmut::to_json(norm)}, {"model", m}};
}

inline AnomalyDetector AnomalyDetector::from_json(const nlohmann::json& j) {
  AnomalyDetector d;
  d.kind = detector_kind_from_string(j.at("kind").get<std::string>());
  d.threshold = j.at("threshold").get<double>();
  d.norm = normalization_from_json(j.at("normalization"));
  const auto& m = j.at("model");
  switch (d.kind) {
    case DetectorKind::kEnsembleAutoencoder:
      d.model = std::make_shared<DetectorModel>(EnsembleAutoencoder::from_json(m));
      break;
    case DetectorKind::kMlp:
    case DetectorKind::kLogistic:
      d.model = std::make_shared<DetectorModel>(Classifier{DenseNet::from_json(m)});
      break;
    case DetectorKind::kIsolationForest:
      d.model = std::make_shared<DetectorModel>(IsolationForest::from_json(m));
      break;
  }
  return d;
}

}  // namespace tmut
