#pragma once

// Lloyd's algorithm with k-means++ or uniform random seeding and restarts.

#include <cstdint>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"
#include "clusterscreen/random.hpp"

namespace clusterscreen {

struct KMeansModel {
  Matrix centroids;  // k x d
  double inertia = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  Assignment labels;                  // final assignment of the training rows
  std::vector<double> inertia_trace;  // inertia at each assignment step of the retained run
};

namespace detail {

inline int nearest_centroid(std::span<const double> x, const Matrix& centroids, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best_d) {  // strict: ties go to the lowest index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

inline double assign_all(const FeatureMatrix& X, const Matrix& centroids, Assignment& labels,
                         std::vector<double>& dist2) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    labels[i] = nearest_centroid(X.row(i), centroids, &dist2[i]);
    inertia += dist2[i];
  }
  return inertia;
}

inline Matrix kmeanspp_seeds(const FeatureMatrix& X, std::size_t k, Rng& rng) {
  const std::size_t n = X.rows();
  Matrix centers(k, X.cols());
  std::size_t first = rng.below(n);
  std::copy(X.row(first).begin(), X.row(first).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(X.row(i), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0.0 && pick > 0) --pick;  // rounding at the tail
    } else {
      pick = rng.below(n);  // every point coincides with a chosen center
    }
    std::copy(X.row(pick).begin(), X.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(X.row(i), centers.row(c)));
  }
  return centers;
}

inline Matrix random_seeds(const FeatureMatrix& X, std::size_t k, Rng& rng) {
  return X.select_rows(rng.sample_distinct(X.rows(), k));
}

}  // namespace detail

// One Lloyd run from the given initial centers. Converges when the Frobenius
// norm of the centroid shift drops below tol, or after max_iter updates.
inline KMeansModel kmeans_lloyd(const FeatureMatrix& X, Matrix centers, int max_iter, double tol) {
  if (centers.cols() != X.cols()) throw std::invalid_argument("kmeans: center dimension mismatch");
  const std::size_t n = X.rows(), d = X.cols(), k = centers.rows();
  KMeansModel m;
  Assignment labels(n, 0);
  std::vector<double> dist2(n);
  std::vector<double> counts(k);
  Matrix next(k, d);

  int it = 0;
  for (; it < max_iter; ++it) {
    m.inertia_trace.push_back(detail::assign_all(X, centers, labels, dist2));

    std::fill(counts.begin(), counts.end(), 0.0);
    next = Matrix(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(static_cast<std::size_t>(labels[i]));
      auto src = X.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      counts[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0.0) continue;
      for (double& v : next.row(c)) v /= counts[c];
    }
    // Empty clusters take the point farthest from its centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0.0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist2[i] > dist2[far]) far = i;
      std::copy(X.row(far).begin(), X.row(far).end(), next.row(c).begin());
      dist2[far] = 0.0;
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift += squared_distance(centers.row(c), next.row(c));
    std::swap(centers, next);
    if (std::sqrt(shift) < tol) {
      ++it;
      break;
    }
  }
  m.inertia = detail::assign_all(X, centers, labels, dist2);
  m.inertia_trace.push_back(m.inertia);
  m.centroids = std::move(centers);
  m.labels = std::move(labels);
  m.iterations = it;
  return m;
}

inline KMeansModel kmeans_fit(const FeatureMatrix& X, const KMeansConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const auto k = static_cast<std::size_t>(cfg.k);
  if (X.rows() < k) throw std::invalid_argument("kmeans: fewer points than clusters");
  if (!X.all_finite()) throw std::invalid_argument("kmeans: non-finite input");

  KMeansModel best;
  bool have = false;
  for (int r = 0; r < cfg.n_init; ++r) {
    const std::uint64_t run_seed = derive_seed(seed, "kmeans-restart", static_cast<std::uint64_t>(r));
    Rng rng(run_seed);
    Matrix init = cfg.init == KMeansInit::KMeansPlusPlus ? detail::kmeanspp_seeds(X, k, rng)
                                                         : detail::random_seeds(X, k, rng);
    KMeansModel m = kmeans_lloyd(X, std::move(init), cfg.max_iter, cfg.tol);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  best.seed = seed;
  return best;
}

inline Assignment kmeans_predict(const KMeansModel& model, const FeatureMatrix& X) {
  if (X.cols() != model.centroids.cols())
    throw std::invalid_argument("kmeans_predict: dimension mismatch");
  Assignment out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = detail::nearest_centroid(X.row(i), model.centroids);
  return out;
}

inline nlohmann::json model_to_json(const KMeansModel& m) {
  std::vector<std::vector<double>> c;
  for (std::size_t i = 0; i < m.centroids.rows(); ++i) c.emplace_back(m.centroids.row(i).begin(), m.centroids.row(i).end());
  return {{"type", "kmeans"}, {"centroids", c}, {"inertia", m.inertia}, {"iterations", m.iterations}, {"seed", m.seed}};
}

}  // namespace clusterscreen
