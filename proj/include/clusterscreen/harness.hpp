#pragma once

// Cross-validated grid search and full-dataset refit.
//
// Per fold, K-Means and GMM are fit on the training rows and assign the test
// rows with predict; Agglomerative and DBSCAN run fit_predict on the test rows
// alone. Cluster ids are mapped to labels with the test fold's own truth.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/agglomerative.hpp"
#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"
#include "clusterscreen/dbscan.hpp"
#include "clusterscreen/gmm.hpp"
#include "clusterscreen/ingest.hpp"
#include "clusterscreen/kmeans.hpp"
#include "clusterscreen/metrics.hpp"
#include "clusterscreen/random.hpp"

namespace clusterscreen {

// --- parallelism ------------------------------------------------------------------

// Worker cap from CLUSTER_SCREEN_THREADS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("CLUSTER_SCREEN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs task(0..count-1) on up to `threads` workers. Results must be written to
// per-index slots; the first failing index's exception is rethrown.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(std::max(1u, threads), count);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// --- folds ------------------------------------------------------------------------

struct FoldPlan {
  std::vector<std::vector<std::size_t>> test_folds;  // each sorted ascending
  std::uint64_t seed = 0;
  std::size_t n = 0;

  std::vector<std::size_t> train_indices(std::size_t f) const {
    std::vector<bool> in_test(n, false);
    for (auto i : test_folds.at(f)) in_test[i] = true;
    std::vector<std::size_t> out;
    out.reserve(n - test_folds[f].size());
    for (std::size_t i = 0; i < n; ++i)
      if (!in_test[i]) out.push_back(i);
    return out;
  }
};

// Shuffles 0..n-1 with the seeded generator, then cuts k contiguous chunks; the
// first n % k chunks get one extra index. For seeds below 2^32 the shuffle
// matches numpy's RandomState(seed), so the folds coincide with scikit-learn's
// KFold(n_splits=k, shuffle=True, random_state=seed).
inline FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: need at least 2 folds");
  if (n < k) throw ConfigError("kfold: fewer points than folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  legacy_numpy_shuffle(idx, static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  FoldPlan plan;
  plan.seed = seed;
  plan.n = n;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    std::vector<std::size_t> fold(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                  idx.begin() + static_cast<std::ptrdiff_t>(start + len));
    std::sort(fold.begin(), fold.end());
    plan.test_folds.push_back(std::move(fold));
    start += len;
  }
  return plan;
}

// --- grids ------------------------------------------------------------------------

inline std::vector<AlgoConfig> default_grid(Algorithm a) {
  std::vector<AlgoConfig> g;
  switch (a) {
    case Algorithm::KMeans:
      for (auto init : {KMeansInit::KMeansPlusPlus, KMeansInit::Random})
        g.push_back(KMeansConfig{.k = 2, .init = init, .n_init = 10});
      break;
    case Algorithm::Gmm:
      for (auto cov : {CovarianceType::Full, CovarianceType::Tied, CovarianceType::Diag, CovarianceType::Spherical})
        g.push_back(GmmConfig{.k = 2, .covariance = cov});
      break;
    case Algorithm::Agglomerative:
      for (auto l : {Linkage::Ward, Linkage::Complete, Linkage::Average, Linkage::Single})
        g.push_back(AgglomerativeConfig{.k = 2, .linkage = l});
      break;
    case Algorithm::Dbscan:
      for (double eps : {0.5, 0.7, 1.0, 1.2})
        for (int ms : {3, 5}) g.push_back(DbscanConfig{.eps = eps, .min_samples = ms});
      break;
  }
  return g;
}

inline std::vector<AlgoConfig> default_grid(std::string_view name) { return default_grid(parse_algorithm(name)); }

// --- fit / assign -----------------------------------------------------------------

// K-Means and GMM use their own restart seeding; the others are deterministic.
inline bool uses_training_rows(const AlgoConfig& cfg) {
  return std::holds_alternative<KMeansConfig>(cfg) || std::holds_alternative<GmmConfig>(cfg);
}

struct Fitted {
  Assignment labels;
  nlohmann::json model;
};

// Fits on `train` (K-Means/GMM) and assigns `target`; Agglomerative and DBSCAN
// ignore `train` and cluster `target` directly.
inline Fitted fit_assign(const AlgoConfig& cfg, const FeatureMatrix& train, const FeatureMatrix& target,
                         std::uint64_t seed, bool keep_model = false) {
  return std::visit(
      [&](const auto& c) -> Fitted {
        using C = std::decay_t<decltype(c)>;
        Fitted f;
        if constexpr (std::is_same_v<C, KMeansConfig>) {
          auto m = kmeans_fit(train, c, seed);
          f.labels = kmeans_predict(m, target);
          if (keep_model) f.model = model_to_json(m);
        } else if constexpr (std::is_same_v<C, GmmConfig>) {
          auto m = gmm_fit(train, c, seed);
          f.labels = gmm_predict(m, target);
          if (keep_model) f.model = model_to_json(m);
        } else if constexpr (std::is_same_v<C, AgglomerativeConfig>) {
          auto r = agglomerative_fit_predict(target, c);
          f.labels = std::move(r.labels);
          if (keep_model) f.model = model_to_json(r.tree);
        } else {
          auto r = dbscan_fit_predict(target, c);
          f.labels = std::move(r.labels);
          if (keep_model) {
            std::vector<std::size_t> cores;
            for (std::size_t i = 0; i < r.core.size(); ++i)
              if (r.core[i]) cores.push_back(i);
            f.model = {{"type", "dbscan"}, {"clusters", r.clusters}, {"core_points", cores}};
          }
        }
        return f;
      },
      cfg);
}

// --- cross-validation -------------------------------------------------------------

struct CvOptions {
  bool scale_per_fold = false;  // refit the scaler on each training fold
  unsigned threads = 1;
};

struct CellResult {
  AlgoConfig config;
  double mean_accuracy = 0.0;
  double mean_ari = 0.0;
  std::optional<double> mean_silhouette;  // over folds where it is defined
  std::vector<MetricBundle> folds;
  std::vector<std::size_t> missing_silhouette_folds;
};

inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, "cv-fold", fold); }
inline std::uint64_t final_seed(std::uint64_t seed) { return derive_seed(seed, "final"); }

inline void check_inputs(const FeatureMatrix& X, const BinaryLabels& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("harness: feature/label row mismatch");
  for (int v : y)
    if (v != 0 && v != 1) throw std::invalid_argument("harness: ground truth must be 0/1");
}

inline void check_plan(const FoldPlan& plan, std::size_t n) {
  std::vector<int> hits(n, 0);
  for (const auto& f : plan.test_folds)
    for (auto i : f) {
      if (i >= n) throw std::invalid_argument("harness: fold index out of range");
      ++hits[i];
    }
  if (plan.n != n || std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; }))
    throw std::invalid_argument("harness: fold plan does not partition the rows");
}

inline MetricBundle evaluate_fold(const FeatureMatrix& X, const BinaryLabels& y, const AlgoConfig& cfg,
                                  const FoldPlan& plan, std::size_t f, std::uint64_t seed,
                                  const CvOptions& opts = {}) {
  const auto& test_idx = plan.test_folds.at(f);
  const auto train_idx = plan.train_indices(f);
  FeatureMatrix train = X.select_rows(train_idx);
  FeatureMatrix test = X.select_rows(test_idx);
  if (opts.scale_per_fold) {
    const auto params = fit_scaler(train);
    train = apply_scaler(train, params);
    test = apply_scaler(test, params);
  }
  BinaryLabels y_test(test_idx.size());
  for (std::size_t r = 0; r < test_idx.size(); ++r) y_test[r] = y[test_idx[r]];
  const auto fitted = fit_assign(cfg, train, test, fold_seed(seed, f));
  return evaluate(test, fitted.labels, y_test);
}

inline CellResult summarize(const AlgoConfig& cfg, std::vector<MetricBundle> folds) {
  CellResult c;
  c.config = cfg;
  double acc = 0.0, ari = 0.0, sil = 0.0;
  std::size_t sil_n = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    acc += folds[f].accuracy;
    ari += folds[f].ari;
    if (folds[f].silhouette) {
      sil += *folds[f].silhouette;
      ++sil_n;
    } else {
      c.missing_silhouette_folds.push_back(f);
    }
  }
  const auto k = static_cast<double>(folds.size());
  c.mean_accuracy = acc / k;
  c.mean_ari = ari / k;
  if (sil_n) c.mean_silhouette = sil / static_cast<double>(sil_n);
  c.folds = std::move(folds);
  return c;
}

inline CellResult cv_evaluate(const FeatureMatrix& X, const BinaryLabels& y, const AlgoConfig& cfg,
                              const FoldPlan& plan, std::uint64_t seed, const CvOptions& opts = {}) {
  validate(cfg);
  check_inputs(X, y);
  check_plan(plan, X.rows());
  std::vector<MetricBundle> folds(plan.test_folds.size());
  parallel_for(folds.size(), opts.threads,
               [&](std::size_t f) { folds[f] = evaluate_fold(X, y, cfg, plan, f, seed, opts); });
  return summarize(cfg, std::move(folds));
}

struct GridResult {
  Algorithm algorithm = Algorithm::KMeans;
  std::vector<CellResult> cells;  // best first
  const CellResult& best() const { return cells.front(); }
};

// Higher mean accuracy wins, then higher mean ARI, then earlier grid position.
inline GridResult grid_search(const FeatureMatrix& X, const BinaryLabels& y, Algorithm algorithm,
                              const std::vector<AlgoConfig>& grid, const FoldPlan& plan, std::uint64_t seed,
                              const CvOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  check_inputs(X, y);
  check_plan(plan, X.rows());
  for (const auto& cfg : grid) {
    validate(cfg);
    if (algorithm_of(cfg) != algorithm) throw ConfigError("grid_search: config for a different algorithm");
  }
  const std::size_t n_folds = plan.test_folds.size();
  std::vector<MetricBundle> results(grid.size() * n_folds);
  parallel_for(results.size(), opts.threads, [&](std::size_t t) {
    results[t] = evaluate_fold(X, y, grid[t / n_folds], plan, t % n_folds, seed, opts);
  });
  GridResult g;
  g.algorithm = algorithm;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<MetricBundle> folds(results.begin() + static_cast<std::ptrdiff_t>(c * n_folds),
                                    results.begin() + static_cast<std::ptrdiff_t>((c + 1) * n_folds));
    g.cells.push_back(summarize(grid[c], std::move(folds)));
  }
  std::stable_sort(g.cells.begin(), g.cells.end(), [](const CellResult& a, const CellResult& b) {
    if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
    return a.mean_ari > b.mean_ari;
  });
  return g;
}

inline GridResult grid_search(const FeatureMatrix& X, const BinaryLabels& y, Algorithm algorithm,
                              const FoldPlan& plan, std::uint64_t seed, const CvOptions& opts = {}) {
  return grid_search(X, y, algorithm, default_grid(algorithm), plan, seed, opts);
}

struct FinalResult {
  AlgoConfig config;
  MetricBundle metrics;
  nlohmann::json model;
  Assignment labels;
  SilhouetteReport silhouette;  // empty when undefined
};

// Fits on every row, assigns every row, maps with the full truth vector.
inline FinalResult final_fit(const FeatureMatrix& X, const BinaryLabels& y, const AlgoConfig& best,
                             std::uint64_t seed) {
  validate(best);
  check_inputs(X, y);
  FinalResult r;
  r.config = best;
  auto fitted = fit_assign(best, X, X, final_seed(seed), /*keep_model=*/true);
  r.metrics = evaluate(X, fitted.labels, y, &r.silhouette);
  r.model = std::move(fitted.model);
  r.labels = std::move(fitted.labels);
  return r;
}

}  // namespace clusterscreen
