#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "tmut/features/config.hpp"

namespace tmut {

// Values tagged as normalized pass through normalize() untouched, which
// makes the operation idempotent.
struct FeatureVector {
  Vec values;
  DimMask mask;
  bool normalized = false;
  bool operator==(const FeatureVector&) const = default;
};

inline constexpr double kConstantSpan = 1e-12;

inline Normalization fit_normalization(const Matrix& rows) {
  if (rows.size() < 2) throw std::invalid_argument("fit_normalization: need at least 2 vectors");
  const std::size_t d = rows.front().size();
  Normalization n{rows.front(), rows.front()};
  for (const auto& r : rows) {
    if (r.size() != d) throw DimensionMismatch("fit_normalization: ragged rows");
    for (std::size_t j = 0; j < d; ++j) {
      n.min[j] = std::min(n.min[j], r[j]);
      n.max[j] = std::max(n.max[j], r[j]);
    }
  }
  return n;
}

inline double normalize_value(double v, double lo, double hi) {
  const double span = hi - lo;
  if (!(span > kConstantSpan)) return 0.0;
  return std::clamp((v - lo) / span, 0.0, 1.0);
}

inline Vec normalize_values(const Vec& v, const Normalization& n) {
  if (v.size() != n.min.size()) throw DimensionMismatch("normalize: dimension mismatch");
  Vec out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = normalize_value(v[j], n.min[j], n.max[j]);
  return out;
}

inline Matrix normalize_matrix(const Matrix& m, const Normalization& n) {
  Matrix out;
  out.reserve(m.size());
  for (const auto& r : m) out.push_back(normalize_values(r, n));
  return out;
}

inline FeatureVector normalize(const FeatureVector& fv, const ExtractorConfig& cfg) {
  if (fv.normalized) return fv;
  FeatureVector out{normalize_values(fv.values, cfg.normalization), fv.mask, true};
  if (out.mask.empty()) out.mask.assign(out.values.size(), true);
  return out;
}

inline nlohmann::json to_json(const Normalization& n) { return {{"min", n.min}, {"max", n.max}}; }

inline Normalization normalization_from_json(const nlohmann::json& j) {
  Normalization n{j.at("min").get<Vec>(), j.at("max").get<Vec>()};
  if (n.min.size() != n.max.size()) throw DimensionMismatch("normalization json: min/max length differ");
  return n;
}

}  // namespace tmut
