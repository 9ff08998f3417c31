#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmut {

using Vec = std::vector<double>;
using Matrix = std::vector<Vec>;
using DimMask = std::vector<bool>;

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExtractorKind { kPacketDamped, kFlow };

// Per-dimension min-max scaling of the selected dimensions.
struct Normalization {
  Vec min;
  Vec max;
  bool fitted() const { return !min.empty(); }
  bool operator==(const Normalization&) const = default;
};

inline constexpr std::size_t kTargetFeaturesPerLambda = 19;
inline constexpr std::size_t kPoolFeaturesPerLambda = 7;

// The feature universe is the target block (19 per lambda) followed by the
// common pool block (7 per pool lambda). known_mask selects from it.
struct ExtractorConfig {
  ExtractorKind kind = ExtractorKind::kPacketDamped;
  Vec lambdas{5.0, 3.0, 1.0, 0.1, 0.01};
  Vec pool_lambdas{3.0, 0.3, 0.03};
  DimMask known_mask;
  Normalization normalization;

  std::size_t target_dims() const { return kTargetFeaturesPerLambda * lambdas.size(); }
  std::size_t pool_dims() const { return kPoolFeaturesPerLambda * pool_lambdas.size(); }
  std::size_t universe_dims() const { return target_dims() + pool_dims(); }

  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < known_mask.size(); ++i)
      if (known_mask[i]) out.push_back(i);
    return out;
  }
  std::size_t dims() const { return static_cast<std::size_t>(std::count(known_mask.begin(), known_mask.end(), true)); }

  bool operator==(const ExtractorConfig&) const = default;
};

inline ExtractorConfig target_extractor_config() {
  ExtractorConfig c;
  c.known_mask.assign(c.universe_dims(), false);
  std::fill(c.known_mask.begin(), c.known_mask.begin() + static_cast<std::ptrdiff_t>(c.target_dims()), true);
  return c;
}

inline ExtractorConfig common_pool_config() {
  ExtractorConfig c;
  c.known_mask.assign(c.universe_dims(), false);
  std::fill(c.known_mask.begin() + static_cast<std::ptrdiff_t>(c.target_dims()), c.known_mask.end(), true);
  return c;
}

// Surrogate extractor for an attacker knowing `fraction` of the target's
// features. Fraction 1 reproduces the target exactly.
template <class Rng>
ExtractorConfig build_surrogate(const ExtractorConfig& target, double fraction, const ExtractorConfig& pool, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("knowledge fraction must lie in [0,1]");
  if (target.known_mask.size() != pool.known_mask.size())
    throw DimensionMismatch("surrogate: target and pool cover different feature universes");
  ExtractorConfig s = target;
  if (fraction >= 1.0) return s;
  s.normalization = {};
  auto known = target.selected();
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(known.size()) + 1e-9));
  std::shuffle(known.begin(), known.end(), rng);
  s.known_mask.assign(target.known_mask.size(), false);
  for (std::size_t i = 0; i < keep; ++i) s.known_mask[known[i]] = true;
  for (std::size_t i = 0; i < pool.known_mask.size(); ++i)
    if (pool.known_mask[i]) s.known_mask[i] = true;
  return s;
}

inline std::vector<std::string> feature_names(const ExtractorConfig& cfg) {
  static const char* kTarget[kTargetFeaturesPerLambda] = {
      "srcmacip_w", "srcmacip_mean", "srcmacip_std", "srcip_w",      "srcip_mean",    "srcip_std",  "channel_w",
      "channel_mean", "channel_std", "channel_mag", "channel_rad", "jitter_w",      "jitter_mean", "jitter_std",
      "socket_w",   "socket_mean",   "socket_std",  "socket_mag",   "socket_rad"};
  static const char* kPool[kPoolFeaturesPerLambda] = {"host_w",        "host_bytes",   "host_size_mean", "host_size_std",
                                                      "host_iat_mean", "host_iat_std", "host_syn_ratio"};
  auto lam = [](double l) {
    std::string s = std::to_string(l);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  std::vector<std::string> all;
  if (cfg.kind == ExtractorKind::kPacketDamped) {
    for (double l : cfg.lambdas)
      for (const char* n : kTarget) all.push_back("L" + lam(l) + "_" + n);
    for (double l : cfg.pool_lambdas)
      for (const char* n : kPool) all.push_back("P" + lam(l) + "_" + n);
  }
  std::vector<std::string> out;
  for (std::size_t i : cfg.selected()) out.push_back(all.at(i));
  return out;
}

}  // namespace tmut
