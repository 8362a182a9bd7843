#pragma once

#include <deque>
#include <vector>

#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"

namespace clusterscreen {

struct DbscanResult {
  Assignment labels;       // -1 = noise
  std::vector<bool> core;  // >= min_samples points (self included) within eps
  int clusters = 0;
};

// Brute-force eps-neighborhoods (self included), ascending index order.
inline std::vector<std::vector<std::size_t>> eps_neighborhoods(const FeatureMatrix& X, double eps) {
  const std::size_t n = X.rows();
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (distance(X.row(i), X.row(j)) <= eps) nb[i].push_back(j);
  return nb;
}

// Clusters grow breadth-first from unlabeled core points taken in index order.
// A border point keeps the first cluster that reaches it.
inline DbscanResult dbscan_fit_predict(const FeatureMatrix& X, const DbscanConfig& cfg) {
  validate(cfg);
  if (!X.all_finite()) throw std::invalid_argument("dbscan: non-finite input");
  const std::size_t n = X.rows();
  const auto nb = eps_neighborhoods(X, cfg.eps);

  DbscanResult r;
  r.labels.assign(n, kNoise);
  r.core.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) r.core[i] = nb[i].size() >= static_cast<std::size_t>(cfg.min_samples);

  int cluster = 0;
  std::deque<std::size_t> frontier;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!r.core[seed] || r.labels[seed] != kNoise) continue;
    r.labels[seed] = cluster;
    frontier.assign(1, seed);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : nb[p]) {
        if (r.labels[q] != kNoise) continue;
        r.labels[q] = cluster;
        if (r.core[q]) frontier.push_back(q);
      }
    }
    ++cluster;
  }
  r.clusters = cluster;
  return r;
}

}  // namespace clusterscreen
