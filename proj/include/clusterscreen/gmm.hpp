#pragma once

// Gaussian mixture fitted by expectation-maximization.
//
// Covariance storage by type:
//   full       k dense d x d matrices
//   tied       one dense d x d matrix shared by all components
//   diag       k x d per-feature variances
//   spherical  k scalar variances
// reg_covar is added to every variance / covariance diagonal after the M-step.
// Initialization: hard responsibilities from a single k-means++ seeded K-Means
// run, followed by one M-step.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"
#include "clusterscreen/kmeans.hpp"
#include "clusterscreen/random.hpp"

namespace clusterscreen {

struct GmmModel {
  CovarianceType type = CovarianceType::Full;
  std::vector<double> weights;           // k
  Matrix means;                          // k x d
  std::vector<Matrix> dense_cov;         // full: k, tied: 1 (d x d)
  Matrix diag_cov;                       // diag: k x d
  std::vector<double> spherical_var;     // spherical: k
  double log_likelihood = 0.0;           // mean per-sample, at the final parameters
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::vector<double> log_likelihood_trace;  // mean per-sample LL before each M-step, then final

  // Cached for density evaluation (full/tied).
  std::vector<Matrix> chol;   // lower Cholesky factors of dense_cov
  std::vector<double> logdet; // per entry of dense_cov

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  // Dense covariance of one component, whatever the storage.
  Matrix covariance(std::size_t c) const {
    const std::size_t d = dim();
    switch (type) {
      case CovarianceType::Full: return dense_cov[c];
      case CovarianceType::Tied: return dense_cov[0];
      case CovarianceType::Diag: {
        Matrix m(d, d);
        for (std::size_t j = 0; j < d; ++j) m(j, j) = diag_cov(c, j);
        return m;
      }
      case CovarianceType::Spherical: {
        Matrix m(d, d);
        for (std::size_t j = 0; j < d; ++j) m(j, j) = spherical_var[c];
        return m;
      }
    }
    return {};
  }
};

namespace detail {

// Lower-triangular L with L L^T = a. Throws when a is not positive definite.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t d = a.rows();
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = a(j, j);
    for (std::size_t p = 0; p < j; ++p) s -= l(j, p) * l(j, p);
    if (!(s > 0.0))
      throw std::runtime_error(
          "gmm: covariance is not positive definite; collapsed component, try a larger reg_covar");
    const double ljj = std::sqrt(s);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = a(i, j);
      for (std::size_t p = 0; p < j; ++p) t -= l(i, p) * l(j, p);
      l(i, j) = t / ljj;
    }
  }
  return l;
}

inline void refresh_factors(GmmModel& m) {
  m.chol.clear();
  m.logdet.clear();
  for (const auto& cov : m.dense_cov) {
    Matrix l = cholesky(cov);
    double ld = 0.0;
    for (std::size_t j = 0; j < l.rows(); ++j) ld += 2.0 * std::log(l(j, j));
    m.chol.push_back(std::move(l));
    m.logdet.push_back(ld);
  }
  if (m.type == CovarianceType::Diag)
    for (std::size_t c = 0; c < m.diag_cov.rows(); ++c)
      for (double v : m.diag_cov.row(c))
        if (!(v > 0.0)) throw std::runtime_error("gmm: non-positive variance; try a larger reg_covar");
  if (m.type == CovarianceType::Spherical)
    for (double v : m.spherical_var)
      if (!(v > 0.0)) throw std::runtime_error("gmm: non-positive variance; try a larger reg_covar");
}

// log N(x | mean_c, cov_c)
inline double log_gaussian(const GmmModel& m, std::span<const double> x, std::size_t c) {
  const std::size_t d = m.dim();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  auto mu = m.means.row(c);
  double maha = 0.0, logdet = 0.0;
  switch (m.type) {
    case CovarianceType::Full:
    case CovarianceType::Tied: {
      const std::size_t f = m.type == CovarianceType::Full ? c : 0;
      const Matrix& l = m.chol[f];
      thread_local std::vector<double> y;
      y.assign(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        double t = x[i] - mu[i];
        for (std::size_t p = 0; p < i; ++p) t -= l(i, p) * y[p];
        y[i] = t / l(i, i);
        maha += y[i] * y[i];
      }
      logdet = m.logdet[f];
      break;
    }
    case CovarianceType::Diag:
      for (std::size_t j = 0; j < d; ++j) {
        const double v = m.diag_cov(c, j);
        const double t = x[j] - mu[j];
        maha += t * t / v;
        logdet += std::log(v);
      }
      break;
    case CovarianceType::Spherical: {
      const double v = m.spherical_var[c];
      maha = squared_distance(x, mu) / v;
      logdet = static_cast<double>(d) * std::log(v);
      break;
    }
  }
  return -0.5 * (static_cast<double>(d) * log2pi + logdet + maha);
}

// Weighted log densities log(w_c) + log N(x_i | c), n x k.
inline Matrix weighted_log_prob(const GmmModel& m, const FeatureMatrix& X) {
  Matrix lp(X.rows(), m.components());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t c = 0; c < m.components(); ++c)
      lp(i, c) = std::log(m.weights[c]) + log_gaussian(m, X.row(i), c);
  return lp;
}

// Row-wise log-sum-exp normalization. Returns the mean per-sample
// log-likelihood; `resp` receives the responsibilities.
inline double e_step(const GmmModel& m, const FeatureMatrix& X, Matrix& resp) {
  resp = weighted_log_prob(m, X);
  double total = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto r = resp.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : r) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : r) v = std::exp(v - lse);
    total += lse;
  }
  return total / static_cast<double>(X.rows());
}

inline void m_step(GmmModel& m, const FeatureMatrix& X, const Matrix& resp, double reg_covar) {
  const std::size_t n = X.rows(), d = X.cols(), k = resp.cols();
  constexpr double tiny = 10.0 * std::numeric_limits<double>::epsilon();
  std::vector<double> nk(k, tiny);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) nk[c] += resp(i, c);
  double nk_total = 0.0;
  for (double v : nk) nk_total += v;

  m.weights.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) m.weights[c] = nk[c] / nk_total;

  m.means = Matrix(k, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const double r = resp(i, c);
      auto mu = m.means.row(c);
      auto x = X.row(i);
      for (std::size_t j = 0; j < d; ++j) mu[j] += r * x[j];
    }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : m.means.row(c)) v /= nk[c];

  m.dense_cov.clear();
  m.diag_cov = Matrix();
  m.spherical_var.clear();

  switch (m.type) {
    case CovarianceType::Full:
    case CovarianceType::Tied: {
      std::vector<Matrix> scatter(k, Matrix(d, d));
      std::vector<double> diff(d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
          const double r = resp(i, c);
          for (std::size_t j = 0; j < d; ++j) diff[j] = X(i, j) - m.means(c, j);
          Matrix& s = scatter[c];
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) s(a, b) += r * diff[a] * diff[b];
        }
      auto finish = [&](Matrix& s, double denom) {
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b <= a; ++b) {
            s(a, b) /= denom;
            s(b, a) = s(a, b);
          }
        for (std::size_t a = 0; a < d; ++a) s(a, a) += reg_covar;
      };
      if (m.type == CovarianceType::Full) {
        for (std::size_t c = 0; c < k; ++c) finish(scatter[c], nk[c]);
        m.dense_cov = std::move(scatter);
      } else {
        Matrix shared(d, d);
        for (std::size_t c = 0; c < k; ++c)
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) shared(a, b) += scatter[c](a, b);
        finish(shared, nk_total);
        m.dense_cov.push_back(std::move(shared));
      }
      break;
    }
    case CovarianceType::Diag:
    case CovarianceType::Spherical: {
      Matrix var(k, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
          const double r = resp(i, c);
          for (std::size_t j = 0; j < d; ++j) {
            const double t = X(i, j) - m.means(c, j);
            var(c, j) += r * t * t;
          }
        }
      for (std::size_t c = 0; c < k; ++c)
        for (double& v : var.row(c)) v = v / nk[c] + reg_covar;
      if (m.type == CovarianceType::Diag) {
        m.diag_cov = std::move(var);
      } else {
        m.spherical_var.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
          double s = 0.0;
          for (double v : var.row(c)) s += v;
          m.spherical_var[c] = s / static_cast<double>(d);
        }
      }
      break;
    }
  }
  refresh_factors(m);
}

}  // namespace detail

// Runs EM from initial responsibilities (n x k). Iterates until the change in
// mean per-sample log-likelihood is below tol, or max_iter.
inline GmmModel gmm_em(const FeatureMatrix& X, const Matrix& initial_resp, const GmmConfig& cfg) {
  validate(cfg);
  if (initial_resp.rows() != X.rows()) throw std::invalid_argument("gmm: responsibility row mismatch");
  GmmModel m;
  m.type = cfg.covariance;
  detail::m_step(m, X, initial_resp, cfg.reg_covar);

  Matrix resp;
  double lower = -std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    const double prev = lower;
    lower = detail::e_step(m, X, resp);
    m.log_likelihood_trace.push_back(lower);
    detail::m_step(m, X, resp, cfg.reg_covar);
    if (std::abs(lower - prev) < cfg.tol) {
      m.converged = true;
      break;
    }
  }
  m.iterations = std::min(it, cfg.max_iter);
  m.log_likelihood = detail::e_step(m, X, resp);
  m.log_likelihood_trace.push_back(m.log_likelihood);
  return m;
}

inline Matrix one_hot(const Assignment& labels, std::size_t k) {
  Matrix r(labels.size(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) r(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return r;
}

inline GmmModel gmm_fit(const FeatureMatrix& X, const GmmConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const auto k = static_cast<std::size_t>(cfg.k);
  if (X.rows() < k) throw std::invalid_argument("gmm: fewer points than components");
  if (!X.all_finite()) throw std::invalid_argument("gmm: non-finite input");

  GmmModel best;
  bool have = false;
  for (int r = 0; r < cfg.n_init; ++r) {
    const std::uint64_t run_seed = derive_seed(seed, "gmm-restart", static_cast<std::uint64_t>(r));
    KMeansConfig init{.k = cfg.k, .init = KMeansInit::KMeansPlusPlus, .n_init = 1};
    const KMeansModel km = kmeans_fit(X, init, run_seed);
    GmmModel m = gmm_em(X, one_hot(km.labels, k), cfg);
    if (!have || m.log_likelihood > best.log_likelihood) {
      best = std::move(m);
      have = true;
    }
  }
  best.seed = seed;
  return best;
}

inline Matrix gmm_predict_proba(const GmmModel& model, const FeatureMatrix& X) {
  if (X.cols() != model.dim()) throw std::invalid_argument("gmm_predict: dimension mismatch");
  Matrix resp;
  detail::e_step(model, X, resp);
  return resp;
}

inline Assignment gmm_predict(const GmmModel& model, const FeatureMatrix& X) {
  if (X.cols() != model.dim()) throw std::invalid_argument("gmm_predict: dimension mismatch");
  const Matrix lp = detail::weighted_log_prob(model, X);
  Assignment out(X.rows(), 0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t c = 1; c < lp.cols(); ++c)
      if (lp(i, c) > lp(i, static_cast<std::size_t>(out[i]))) out[i] = static_cast<int>(c);
  return out;
}

inline nlohmann::json model_to_json(const GmmModel& m) {
  auto rows_of = [](const Matrix& a) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < a.rows(); ++i) out.emplace_back(a.row(i).begin(), a.row(i).end());
    return out;
  };
  nlohmann::json j{{"type", "gmm"},
                   {"covariance_type", m.type},
                   {"weights", m.weights},
                   {"means", rows_of(m.means)},
                   {"log_likelihood", m.log_likelihood},
                   {"iterations", m.iterations},
                   {"converged", m.converged},
                   {"seed", m.seed}};
  switch (m.type) {
    case CovarianceType::Full: {
      auto covs = nlohmann::json::array();
      for (const auto& c : m.dense_cov) covs.push_back(rows_of(c));
      j["covariances"] = covs;
      break;
    }
    case CovarianceType::Tied: j["covariances"] = rows_of(m.dense_cov[0]); break;
    case CovarianceType::Diag: j["covariances"] = rows_of(m.diag_cov); break;
    case CovarianceType::Spherical: j["covariances"] = m.spherical_var; break;
  }
  return j;
}

}  // namespace clusterscreen
