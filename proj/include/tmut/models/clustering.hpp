#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tmut/features/config.hpp"

namespace tmut {

using Grouping = std::vector<std::vector<std::size_t>>;

inline std::vector<Vec> correlation_matrix(const Matrix& X) {
  const std::size_t d = X.empty() ? 0 : X.front().size();
  const double n = static_cast<double>(X.size());
  Vec mean(d, 0.0);
  for (const auto& r : X)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / n;
  std::vector<Vec> cov(d, Vec(d, 0.0));
  for (const auto& r : X)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = r[a] - mean[a];
      for (std::size_t b = a; b < d; ++b) cov[a][b] += da * (r[b] - mean[b]);
    }
  std::vector<Vec> corr(d, Vec(d, 0.0));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      const double den = std::sqrt(cov[a][a] * cov[b][b]);
      const double c = den > 1e-300 ? cov[a][b] / den : (a == b ? 1.0 : 0.0);
      corr[a][b] = corr[b][a] = std::clamp(c, -1.0, 1.0);
    }
  return corr;
}

// Single-linkage agglomerative clustering on 1 - |corr|; the dendrogram is
// then cut top-down so that no group exceeds m_max dimensions.
inline Grouping feature_group(const Matrix& X, std::size_t m_max) {
  if (X.empty()) throw std::invalid_argument("feature_group: no data");
  if (m_max == 0) throw std::invalid_argument("feature_group: m_max must be >= 1");
  const std::size_t d = X.front().size();
  if (d == 0) return {};
  if (d == 1) return {{0}};
  const auto corr = correlation_matrix(X);

  struct Node {
    int left = -1, right = -1;
    std::vector<std::size_t> members;
  };
  std::vector<Node> nodes(d);
  for (std::size_t i = 0; i < d; ++i) nodes[i].members = {i};
  std::vector<std::size_t> active(d);
  for (std::size_t i = 0; i < d; ++i) active[i] = i;
  std::vector<Vec> dist(d, Vec(d, 0.0));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) dist[a][b] = 1.0 - std::abs(corr[a][b]);

  // dist is indexed by position in `active`.
  while (active.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j)
        if (dist[i][j] < best) {
          best = dist[i][j];
          bi = i;
          bj = j;
        }
    Node merged;
    merged.left = static_cast<int>(active[bi]);
    merged.right = static_cast<int>(active[bj]);
    merged.members = nodes[active[bi]].members;
    merged.members.insert(merged.members.end(), nodes[active[bj]].members.begin(), nodes[active[bj]].members.end());
    nodes.push_back(std::move(merged));
    for (std::size_t k = 0; k < active.size(); ++k) dist[bi][k] = dist[k][bi] = std::min(dist[bi][k], dist[bj][k]);
    dist[bi][bi] = 0.0;
    active[bi] = nodes.size() - 1;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(bj));
    for (auto& row : dist) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  Grouping groups;
  std::vector<std::size_t> stack{active.front()};
  while (!stack.empty()) {
    const Node& n = nodes[stack.back()];
    stack.pop_back();
    if (n.members.size() <= m_max) {
      auto g = n.members;
      std::sort(g.begin(), g.end());
      groups.push_back(std::move(g));
    } else {
      stack.push_back(static_cast<std::size_t>(n.right));
      stack.push_back(static_cast<std::size_t>(n.left));
    }
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

}  // namespace tmut
