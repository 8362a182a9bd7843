#pragma once

// Bottom-up hierarchical clustering with Lance-Williams distance updates.
//
// Ward operates on half squared Euclidean distances, which makes every
// reported merge height equal to the increase in within-cluster sum of
// squares caused by that merge. The other linkages use Euclidean distance.

#include <limits>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"

namespace clusterscreen {

struct Merge {
  std::size_t a = 0;  // cluster ids: 0..n-1 are points, n+s is the cluster made at step s
  std::size_t b = 0;
  double distance = 0.0;
  std::size_t size = 0;
  friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
  std::size_t points = 0;
  std::vector<Merge> merges;  // n - 1 entries
};

// Lance-Williams update of d(k, i+j) from d(k, i), d(k, j), d(i, j).
inline double lance_williams(Linkage linkage, double dki, double dkj, double dij, double ni, double nj,
                             double nk) {
  switch (linkage) {
    case Linkage::Single: return 0.5 * dki + 0.5 * dkj - 0.5 * std::abs(dki - dkj);
    case Linkage::Complete: return 0.5 * dki + 0.5 * dkj + 0.5 * std::abs(dki - dkj);
    case Linkage::Average: return (ni * dki + nj * dkj) / (ni + nj);
    case Linkage::Ward: return ((ni + nk) * dki + (nj + nk) * dkj - nk * dij) / (ni + nj + nk);
  }
  return 0.0;
}

// Full merge tree. Each step merges the closest active pair; ties resolve to
// the lexicographically smallest (slot i, slot j), where a merged cluster
// occupies the lower slot of its two parts.
inline Dendrogram build_dendrogram(const FeatureMatrix& X, Linkage linkage) {
  const std::size_t n = X.rows();
  Dendrogram tree;
  tree.points = n;
  if (n < 2) return tree;

  std::vector<double> dist(n * n, 0.0);
  auto D = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = squared_distance(X.row(i), X.row(j));
      D(i, j) = D(j, i) = linkage == Linkage::Ward ? 0.5 * d2 : std::sqrt(d2);
    }

  std::vector<std::size_t> id(n), size(n, 1);
  std::iota(id.begin(), id.end(), std::size_t{0});
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});

  tree.merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t p = 0; p < active.size(); ++p) {
      const std::size_t i = active[p];
      const double* row = &dist[i * n];
      for (std::size_t q = p + 1; q < active.size(); ++q) {
        const std::size_t j = active[q];
        if (row[j] < best) {
          best = row[j];
          bi = i;
          bj = j;
        }
      }
    }

    const double ni = static_cast<double>(size[bi]), nj = static_cast<double>(size[bj]);
    for (std::size_t k : active) {
      if (k == bi || k == bj) continue;
      const double updated = lance_williams(linkage, D(k, bi), D(k, bj), best, ni, nj, static_cast<double>(size[k]));
      D(k, bi) = D(bi, k) = updated;
    }
    tree.merges.push_back({std::min(id[bi], id[bj]), std::max(id[bi], id[bj]), best, size[bi] + size[bj]});
    size[bi] += size[bj];
    id[bi] = n + step;
    active.erase(std::find(active.begin(), active.end(), bj));
  }
  return tree;
}

// Flat clustering with k clusters: the first n - k merges, applied in order.
// Cluster ids are numbered by first appearance in point order.
inline Assignment cut_tree(const Dendrogram& tree, std::size_t k) {
  const std::size_t n = tree.points;
  if (k < 1 || k > n) throw std::invalid_argument("cut_tree: k out of range");
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < n - k; ++s) {
    const auto& m = tree.merges[s];
    parent[find(m.a)] = n + s;
    parent[find(m.b)] = n + s;
  }
  Assignment roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = static_cast<int>(find(i));
  return canonicalize(roots);
}

struct AgglomerativeResult {
  Assignment labels;
  Dendrogram tree;
};

inline AgglomerativeResult agglomerative_fit_predict(const FeatureMatrix& X, const AgglomerativeConfig& cfg) {
  validate(cfg);
  if (X.rows() < static_cast<std::size_t>(cfg.k))
    throw std::invalid_argument("agglomerative: fewer points than clusters");
  AgglomerativeResult r;
  r.tree = build_dendrogram(X, cfg.linkage);
  r.labels = cut_tree(r.tree, static_cast<std::size_t>(cfg.k));
  return r;
}

inline nlohmann::json model_to_json(const Dendrogram& t) {
  auto merges = nlohmann::json::array();
  for (const auto& m : t.merges) merges.push_back({m.a, m.b, m.distance, m.size});
  return {{"type", "agglomerative"}, {"points", t.points}, {"merges", merges}};
}

}  // namespace clusterscreen
