#pragma once

// Cluster validity and label-agreement metrics: contingency tables, adjusted
// Rand index, silhouette coefficient, cluster-to-label mapping, accuracy and
// the 2x2 confusion matrix.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/core.hpp"

namespace clusterscreen {

// A metric has no value for this input (e.g. silhouette of a single cluster).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ContingencyTable {
  std::vector<int> row_ids, col_ids;               // sorted distinct labels of u and v
  std::vector<std::vector<std::int64_t>> counts;   // counts[i][j] = |U_i ∩ V_j|
  std::vector<std::int64_t> row_sums, col_sums;
  std::int64_t total = 0;
};

inline ContingencyTable contingency(const std::vector<int>& u, const std::vector<int>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("contingency: length mismatch");
  ContingencyTable t;
  t.row_ids = u;
  t.col_ids = v;
  for (auto* ids : {&t.row_ids, &t.col_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }
  auto index = [](const std::vector<int>& ids, int x) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), x) - ids.begin());
  };
  t.counts.assign(t.row_ids.size(), std::vector<std::int64_t>(t.col_ids.size(), 0));
  t.row_sums.assign(t.row_ids.size(), 0);
  t.col_sums.assign(t.col_ids.size(), 0);
  for (std::size_t p = 0; p < u.size(); ++p) {
    const auto i = index(t.row_ids, u[p]), j = index(t.col_ids, v[p]);
    ++t.counts[i][j];
    ++t.row_sums[i];
    ++t.col_sums[j];
  }
  t.total = static_cast<std::int64_t>(u.size());
  return t;
}

inline std::int64_t pairs(std::int64_t m) { return m * (m - 1) / 2; }

// Adjusted Rand index in the pair-counting form
//   (Index - Expected) / (Max - Expected)
// with Index = sum C(n_ij, 2), Expected = sum_i C(a_i, 2) sum_j C(b_j, 2) / C(n, 2),
// Max = (sum_i C(a_i, 2) + sum_j C(b_j, 2)) / 2.
// When Max == Expected the result is 1 for identical set partitions, else 0.
inline double adjusted_rand_index(const std::vector<int>& u, const std::vector<int>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("ari: length mismatch");
  if (u.empty()) throw std::invalid_argument("ari: empty input");
  const auto t = contingency(u, v);
  std::int64_t index = 0, sum_a = 0, sum_b = 0;
  for (const auto& row : t.counts)
    for (auto c : row) index += pairs(c);
  for (auto a : t.row_sums) sum_a += pairs(a);
  for (auto b : t.col_sums) sum_b += pairs(b);
  const std::int64_t all = pairs(t.total);

  auto identical = [&] {
    for (const auto& row : t.counts)
      if (std::count_if(row.begin(), row.end(), [](auto c) { return c > 0; }) != 1) return false;
    return t.row_ids.size() == t.col_ids.size();
  };
  if (all == 0) return identical() ? 1.0 : 0.0;
  const double expected = static_cast<double>(sum_a) * static_cast<double>(sum_b) / static_cast<double>(all);
  const double max_index = 0.5 * static_cast<double>(sum_a + sum_b);
  if (max_index == expected) return identical() ? 1.0 : 0.0;
  return (static_cast<double>(index) - expected) / (max_index - expected);
}

// --- silhouette -------------------------------------------------------------------

enum class NoisePolicy {
  Exclude,    // noise points are neither scored nor candidates for b(x)
  AsCluster,  // -1 is treated as one more cluster
};

struct SilhouetteReport {
  std::vector<double> a, b, s;  // per point; unscored points hold 0
  std::vector<bool> scored;
  double mean = 0.0;            // over scored points
  std::size_t scored_count = 0;
};

// s(x) = (b - a) / max(a, b) with Euclidean distances; a singleton cluster's
// point scores 0. Throws UndefinedMetric with fewer than two scored clusters.
inline SilhouetteReport silhouette(const FeatureMatrix& X, const Assignment& assign,
                                   NoisePolicy noise = NoisePolicy::Exclude) {
  const std::size_t n = X.rows();
  if (assign.size() != n) throw std::invalid_argument("silhouette: length mismatch");

  std::map<int, std::size_t> slot;
  std::vector<bool> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    scored[i] = !(assign[i] == kNoise && noise == NoisePolicy::Exclude);
    if (scored[i]) slot.try_emplace(assign[i], slot.size());
  }
  const std::size_t m = slot.size();
  if (m < 2) throw UndefinedMetric("silhouette: fewer than two clusters");
  std::vector<std::size_t> cid(n, 0), csize(m, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (scored[i]) ++csize[cid[i] = slot.at(assign[i])];

  SilhouetteReport r;
  r.a.assign(n, 0.0);
  r.b.assign(n, 0.0);
  r.s.assign(n, 0.0);
  r.scored = scored;
  std::vector<double> sums(m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!scored[i]) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (scored[j] && j != i) sums[cid[j]] += distance(X.row(i), X.row(j));
    const std::size_t own = cid[i];
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c)
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(csize[c]));
    r.b[i] = b;
    if (csize[own] > 1) {
      const double a = sums[own] / static_cast<double>(csize[own] - 1);
      r.a[i] = a;
      const double denom = std::max(a, b);
      r.s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    total += r.s[i];
    ++r.scored_count;
  }
  r.mean = total / static_cast<double>(r.scored_count);
  return r;
}

// --- mapping / accuracy -------------------------------------------------------

enum class MappingMethod { Permutation, Majority };
NLOHMANN_JSON_SERIALIZE_ENUM(MappingMethod, {{MappingMethod::Permutation, "permutation"},
                                             {MappingMethod::Majority, "majority"}})

struct LabelMapping {
  std::map<int, int> label_of;  // cluster id (incl. -1) -> 0/1
  MappingMethod method = MappingMethod::Permutation;
};

struct MappedLabels {
  LabelMapping mapping;
  BinaryLabels mapped;
};

inline double accuracy(const BinaryLabels& mapped, const BinaryLabels& truth) {
  if (mapped.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (mapped.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < mapped.size(); ++i) hit += mapped[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(mapped.size());
}

// Two clusters (no noise): the better of the two id -> label permutations,
// ties to the one sending the lower id to 0. Otherwise every cluster, noise
// included, takes its majority truth label, ties to 0.
inline MappedLabels map_clusters_to_labels(const Assignment& assign, const BinaryLabels& truth) {
  if (assign.size() != truth.size()) throw std::invalid_argument("mapping: length mismatch");
  if (assign.empty()) throw std::invalid_argument("mapping: empty input");

  std::map<int, std::pair<std::size_t, std::size_t>> votes;  // id -> (zeros, ones)
  for (std::size_t i = 0; i < assign.size(); ++i) {
    auto& [zeros, ones] = votes[assign[i]];
    (truth[i] ? ones : zeros) += 1;
  }

  MappedLabels out;
  if (votes.size() == 2 && !votes.contains(kNoise)) {
    const auto& [lo, lo_votes] = *votes.begin();
    const auto& [hi, hi_votes] = *votes.rbegin();
    // matches when lo -> 0, hi -> 1 versus lo -> 1, hi -> 0
    const std::size_t straight = lo_votes.first + hi_votes.second;
    const std::size_t swapped = lo_votes.second + hi_votes.first;
    const bool keep = straight >= swapped;
    out.mapping.label_of = {{lo, keep ? 0 : 1}, {hi, keep ? 1 : 0}};
    out.mapping.method = MappingMethod::Permutation;
  } else {
    for (const auto& [id, v] : votes) out.mapping.label_of[id] = v.second > v.first ? 1 : 0;
    out.mapping.method = MappingMethod::Majority;
  }
  out.mapped.resize(assign.size());
  for (std::size_t i = 0; i < assign.size(); ++i) out.mapped[i] = out.mapping.label_of.at(assign[i]);
  return out;
}

struct ConfusionMatrix2x2 {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;  // rows actual NO/ASD, columns predicted NO/ASD
  std::size_t total() const { return tn + fp + fn + tp; }
  friend bool operator==(const ConfusionMatrix2x2&, const ConfusionMatrix2x2&) = default;
};

inline ConfusionMatrix2x2 confusion(const BinaryLabels& mapped, const BinaryLabels& truth) {
  if (mapped.size() != truth.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix2x2 c;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (truth[i]) (mapped[i] ? c.tp : c.fn) += 1;
    else (mapped[i] ? c.fp : c.tn) += 1;
  }
  return c;
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix2x2& c) {
  j = {{"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"tp", c.tp}};
}
inline void from_json(const nlohmann::json& j, ConfusionMatrix2x2& c) {
  c.tn = j.at("tn").get<std::size_t>();
  c.fp = j.at("fp").get<std::size_t>();
  c.fn = j.at("fn").get<std::size_t>();
  c.tp = j.at("tp").get<std::size_t>();
}

// Everything measured for one (assignment, truth) evaluation.
struct MetricBundle {
  double accuracy = 0.0;
  double ari = 0.0;
  std::optional<double> silhouette;                   // noise excluded
  std::optional<double> silhouette_noise_as_cluster;  // only when noise is present
  ConfusionMatrix2x2 confusion;
  LabelMapping mapping;
  std::size_t clusters = 0;  // distinct non-noise ids
  std::size_t noise = 0;
};

inline MetricBundle evaluate(const FeatureMatrix& X, const Assignment& assign, const BinaryLabels& truth,
                             SilhouetteReport* report = nullptr) {
  MetricBundle b;
  auto mapped = map_clusters_to_labels(assign, truth);
  b.accuracy = accuracy(mapped.mapped, truth);
  b.ari = adjusted_rand_index(truth, assign);
  b.confusion = confusion(mapped.mapped, truth);
  b.mapping = std::move(mapped.mapping);
  std::map<int, int> ids;
  for (int a : assign) {
    if (a == kNoise) ++b.noise;
    else ids[a] = 1;
  }
  b.clusters = ids.size();
  try {
    auto s = silhouette(X, assign, NoisePolicy::Exclude);
    b.silhouette = s.mean;
    if (report) *report = std::move(s);
  } catch (const UndefinedMetric&) {
  }
  if (b.noise > 0) {
    try {
      b.silhouette_noise_as_cluster = silhouette(X, assign, NoisePolicy::AsCluster).mean;
    } catch (const UndefinedMetric&) {
    }
  }
  return b;
}

inline void to_json(nlohmann::json& j, const MetricBundle& b) {
  auto mapping = nlohmann::json::object();
  for (const auto& [id, label] : b.mapping.label_of) mapping[std::to_string(id)] = label;
  j = {{"accuracy", b.accuracy},
       {"ari", b.ari},
       {"silhouette", b.silhouette ? nlohmann::json(*b.silhouette) : nlohmann::json(nullptr)},
       {"confusion", b.confusion},
       {"mapping", mapping},
       {"method", b.mapping.method},
       {"clusters", b.clusters},
       {"noise", b.noise}};
  if (b.silhouette_noise_as_cluster) j["silhouette_noise_as_cluster"] = *b.silhouette_noise_as_cluster;
}

inline void from_json(const nlohmann::json& j, MetricBundle& b) {
  b.accuracy = j.at("accuracy").get<double>();
  b.ari = j.at("ari").get<double>();
  b.silhouette = j.at("silhouette").is_null() ? std::nullopt : std::optional<double>(j.at("silhouette").get<double>());
  b.silhouette_noise_as_cluster = j.contains("silhouette_noise_as_cluster")
                                      ? std::optional<double>(j.at("silhouette_noise_as_cluster").get<double>())
                                      : std::nullopt;
  b.confusion = j.at("confusion").get<ConfusionMatrix2x2>();
  b.mapping.label_of.clear();
  for (const auto& [id, label] : j.at("mapping").items()) b.mapping.label_of[std::stoi(id)] = label.get<int>();
  b.mapping.method = j.at("method").get<MappingMethod>();
  b.clusters = j.value("clusters", std::size_t{0});
  b.noise = j.value("noise", std::size_t{0});
}

}  // namespace clusterscreen
