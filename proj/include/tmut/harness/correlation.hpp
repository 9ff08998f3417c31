#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmut/harness/pipeline.hpp"

namespace tmut {

struct TooFewValidSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN when either side has zero variance.
inline double pearson(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw DimensionMismatch("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

struct CorrelationSample {
  std::size_t packet = 0;  // index of the studied packet in the malicious trace
  Vec f_mal, f_tar;
  double distance = 0.0;         // L(f_mal, f_tar)
  double time_overhead = 1.0;    // mutated elapsed / original elapsed
  double volume_overhead = 1.0;  // mutated bytes / original bytes
  double proximity = 0.0;        // 1 - L(E(t'), f_tar) / distance
  bool valid = false;

  double overhead() const { return time_overhead + volume_overhead; }
};

struct CorrelationResult {
  double pcc = 0.0;
  std::size_t n_valid = 0;
  std::vector<CorrelationSample> samples;
};

inline std::string correlation_samples_to_csv(const std::vector<CorrelationSample>& samples) {
  std::ostringstream os;
  os << "packet,distance,time_overhead,volume_overhead,overhead,proximity,valid\n";
  for (const auto& s : samples)
    os << s.packet << ',' << format_double(s.distance) << ',' << format_double(s.time_overhead) << ','
       << format_double(s.volume_overhead) << ',' << format_double(s.overhead()) << ','
       << format_double(s.proximity) << ',' << (s.valid ? 1 : 0) << '\n';
  return os.str();
}

inline double pcc_of_valid(const std::vector<CorrelationSample>& samples) {
  Vec x, y;
  for (const auto& s : samples)
    if (s.valid) {
      x.push_back(s.distance);
      y.push_back(s.overhead());
    }
  return pearson(x, y);
}

namespace correlation_detail {

inline double ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace correlation_detail

// For each studied packet, the window of `window` packets ending at it is the
// mutable unit; the packets before the window only feed the extractor state.
// Targets are features of random budget-valid mutants of the window whose
// distance from f_mal falls in the band, picked to spread over it. PSO then
// steers the window toward each target and the overhead it spent is recorded.
inline CorrelationResult correlate(const ExperimentConfig& c, const Scenario& s, StageLog* log = nullptr) {
  using correlation_detail::ratio;
  const CorrelationOptions& o = c.correlation;
  o.validate();
  if (s.malicious.empty()) throw EmptyTrace("correlate: empty malicious trace");
  const TrafficTrace mal = to_relative(s.malicious, s.malicious.packets.front().timestamp);
  const std::size_t n = mal.size();
  if (n < o.window || n - o.window + 1 < o.n_mal)
    throw std::invalid_argument("correlate: malicious trace too short for n_mal windows");

  enter_stage(log, "surrogate");
  const AttackerView view = make_attacker_view(c, s.attacker_benign, s.malicious, c.knowledge_fraction, "correlate");

  enter_stage(log, "correlate");
  auto rng = stage_rng(c.seed, "correlate");
  std::vector<std::size_t> all(n - o.window + 1);
  std::iota(all.begin(), all.end(), o.window - 1);
  std::vector<std::size_t> picks;
  std::sample(all.begin(), all.end(), std::back_inserter(picks), o.n_mal, rng);

  CorrelationResult res;
  PacketExtractor run(view.surrogate);
  std::size_t processed = 0;
  for (const std::size_t idx : picks) {
    const std::size_t start = idx + 1 - o.window;
    for (; processed < start; ++processed) run.process(mal.packets[processed]);
    const TrafficTrace window = slice(mal, start, idx + 1);
    const auto featurize = packet_featurizer(run, view.norm);
    const Vec f_mal = featurize(window).back();

    const std::string key = "correlate/" + std::to_string(idx);
    PsoConfig pc = c.pso;
    pc.seed = derive_seed(c.seed, key + "/rebuild");
    const MetaSpace space = MetaSpace::build(window, c.budget, c.budget.default_capacity());
    Rng crng(derive_seed(c.seed, key + "/candidates"));
    std::vector<std::pair<double, Vec>> band;  // (distance, features) of in-band mutants
    for (std::size_t k = 0; k < o.candidates; ++k) {
      const MetaInfoVector x = random_position(window, space, c.pso.m, crng);
      Vec f = featurize(rebuild_for_eval(x, window, c.budget, pc)).back();
      const double d = euclidean(f, f_mal);
      if (d >= o.band_lo && d <= o.band_hi) band.emplace_back(d, std::move(f));
    }

    for (std::size_t t = 0; t < o.targets_per && !band.empty(); ++t) {
      const double want = std::uniform_real_distribution<double>(o.band_lo, o.band_hi)(rng);
      const auto best = std::min_element(band.begin(), band.end(), [&](const auto& a, const auto& b) {
        return std::abs(a.first - want) < std::abs(b.first - want);
      });
      CorrelationSample smp;
      smp.packet = idx;
      smp.f_mal = f_mal;
      smp.f_tar = std::move(best->second);
      smp.distance = best->first;
      band.erase(best);

      PsoConfig sc = c.pso;
      sc.n_iter = o.n_iter;
      sc.seed = derive_seed(c.seed, key + "/pso/" + std::to_string(t));
      const Vec& f_tar = smp.f_tar;
      const TraceFitness fitness = [&featurize, &f_tar](const TrafficTrace& tr) {
        return euclidean(featurize(tr).back(), f_tar);
      };
      const PsoResult r = mutate(window, fitness, sc, c.budget);
      smp.proximity = 1.0 - euclidean(featurize(r.trace).back(), f_tar) / smp.distance;
      smp.valid = smp.proximity > o.validity;
      smp.time_overhead = ratio(r.trace.elapsed(), window.elapsed());
      smp.volume_overhead =
          ratio(static_cast<double>(r.trace.total_bytes()), static_cast<double>(window.total_bytes()));
      res.n_valid += smp.valid ? 1 : 0;
      res.samples.push_back(std::move(smp));
    }
  }
  if (res.n_valid < 10)
    throw TooFewValidSamples("correlate: only " + std::to_string(res.n_valid) + " valid samples (need 10)");
  res.pcc = pcc_of_valid(res.samples);
  return res;
}

}  // namespace tmut
