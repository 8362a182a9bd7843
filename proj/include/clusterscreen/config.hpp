#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "clusterscreen/core.hpp"

namespace clusterscreen {

enum class KMeansInit { KMeansPlusPlus, Random };
enum class CovarianceType { Full, Tied, Diag, Spherical };
enum class Linkage { Ward, Complete, Average, Single };

NLOHMANN_JSON_SERIALIZE_ENUM(KMeansInit, {{KMeansInit::KMeansPlusPlus, "k-means++"},
                                          {KMeansInit::Random, "random"}})
NLOHMANN_JSON_SERIALIZE_ENUM(CovarianceType, {{CovarianceType::Full, "full"},
                                              {CovarianceType::Tied, "tied"},
                                              {CovarianceType::Diag, "diag"},
                                              {CovarianceType::Spherical, "spherical"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Linkage, {{Linkage::Ward, "ward"},
                                       {Linkage::Complete, "complete"},
                                       {Linkage::Average, "average"},
                                       {Linkage::Single, "single"}})

struct KMeansConfig {
  int k = 2;
  KMeansInit init = KMeansInit::KMeansPlusPlus;
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-4;  // Frobenius norm of the centroid shift
  friend bool operator==(const KMeansConfig&, const KMeansConfig&) = default;
};

struct GmmConfig {
  int k = 2;
  CovarianceType covariance = CovarianceType::Full;
  int n_init = 1;
  int max_iter = 300;
  double tol = 1e-4;  // change in mean per-sample log-likelihood
  double reg_covar = 1e-6;
  friend bool operator==(const GmmConfig&, const GmmConfig&) = default;
};

struct AgglomerativeConfig {
  int k = 2;
  Linkage linkage = Linkage::Ward;
  friend bool operator==(const AgglomerativeConfig&, const AgglomerativeConfig&) = default;
};

struct DbscanConfig {
  double eps = 0.5;
  int min_samples = 5;
  friend bool operator==(const DbscanConfig&, const DbscanConfig&) = default;
};

using AlgoConfig = std::variant<KMeansConfig, GmmConfig, AgglomerativeConfig, DbscanConfig>;

enum class Algorithm { KMeans, Gmm, Agglomerative, Dbscan };

inline Algorithm algorithm_of(const AlgoConfig& c) { return static_cast<Algorithm>(c.index()); }

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::KMeans: return "kmeans";
    case Algorithm::Gmm: return "gmm";
    case Algorithm::Agglomerative: return "agglomerative";
    case Algorithm::Dbscan: return "dbscan";
  }
  return "?";
}

// Display name used in the summary tables.
inline std::string_view algorithm_title(Algorithm a) {
  switch (a) {
    case Algorithm::KMeans: return "K-Means";
    case Algorithm::Gmm: return "GMM";
    case Algorithm::Agglomerative: return "Agglomerative";
    case Algorithm::Dbscan: return "DBSCAN";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::KMeans, Algorithm::Gmm, Algorithm::Agglomerative, Algorithm::Dbscan})
    if (algorithm_name(a) == name) return a;
  throw ConfigError("unknown algorithm \"" + std::string(name) + "\"");
}

inline void validate(const KMeansConfig& c) {
  if (c.k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (c.n_init < 1) throw ConfigError("kmeans: n_init must be >= 1");
  if (c.max_iter < 1) throw ConfigError("kmeans: max_iter must be >= 1");
  if (!(c.tol > 0)) throw ConfigError("kmeans: tol must be > 0");
}
inline void validate(const GmmConfig& c) {
  if (c.k < 1) throw ConfigError("gmm: k must be >= 1");
  if (c.n_init < 1) throw ConfigError("gmm: n_init must be >= 1");
  if (c.max_iter < 1) throw ConfigError("gmm: max_iter must be >= 1");
  if (!(c.tol > 0)) throw ConfigError("gmm: tol must be > 0");
  if (!(c.reg_covar >= 0)) throw ConfigError("gmm: reg_covar must be >= 0");
}
inline void validate(const AgglomerativeConfig& c) {
  if (c.k < 1) throw ConfigError("agglomerative: k must be >= 1");
}
inline void validate(const DbscanConfig& c) {
  if (!(c.eps > 0)) throw ConfigError("dbscan: eps must be > 0");
  if (c.min_samples < 1) throw ConfigError("dbscan: min_samples must be >= 1");
}
inline void validate(const AlgoConfig& c) {
  std::visit([](const auto& v) { validate(v); }, c);
}

// --- JSON ---------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const KMeansConfig& c) {
  j = {{"algorithm", "kmeans"}, {"k", c.k},           {"init", c.init},
       {"n_init", c.n_init},    {"max_iter", c.max_iter}, {"tol", c.tol}};
}
inline void to_json(nlohmann::json& j, const GmmConfig& c) {
  j = {{"algorithm", "gmm"},       {"k", c.k},   {"covariance", c.covariance}, {"n_init", c.n_init},
       {"max_iter", c.max_iter}, {"tol", c.tol}, {"reg_covar", c.reg_covar}};
}
inline void to_json(nlohmann::json& j, const AgglomerativeConfig& c) {
  j = {{"algorithm", "agglomerative"}, {"k", c.k}, {"linkage", c.linkage}};
}
inline void to_json(nlohmann::json& j, const DbscanConfig& c) {
  j = {{"algorithm", "dbscan"}, {"eps", c.eps}, {"min_samples", c.min_samples}};
}

namespace detail {
template <typename E>
E enum_from(const nlohmann::json& j, const char* key, E fallback) {
  if (!j.contains(key)) return fallback;
  const auto s = j.at(key).get<std::string>();
  E e = j.at(key).get<E>();
  // nlohmann maps unknown strings to the first enumerator; reject them instead.
  if (nlohmann::json(e).get<std::string>() != s) throw ConfigError(std::string("invalid ") + key + " \"" + s + "\"");
  return e;
}
}  // namespace detail

// Missing keys take their defaults; unknown algorithms and enum strings are
// ConfigErrors. `algorithm` is required unless `implied` is given.
inline AlgoConfig config_from_json(const nlohmann::json& j, std::optional<Algorithm> implied = std::nullopt) {
  try {
    const Algorithm a = j.contains("algorithm") ? parse_algorithm(j.at("algorithm").get<std::string>())
                        : implied             ? *implied
                                              : throw ConfigError("config: missing \"algorithm\"");
    AlgoConfig out;
    switch (a) {
      case Algorithm::KMeans: {
        KMeansConfig c;
        c.k = j.value("k", c.k);
        c.init = detail::enum_from(j, "init", c.init);
        c.n_init = j.value("n_init", c.n_init);
        c.max_iter = j.value("max_iter", c.max_iter);
        c.tol = j.value("tol", c.tol);
        out = c;
        break;
      }
      case Algorithm::Gmm: {
        GmmConfig c;
        c.k = j.value("k", c.k);
        c.covariance = detail::enum_from(j, "covariance", c.covariance);
        c.n_init = j.value("n_init", c.n_init);
        c.max_iter = j.value("max_iter", c.max_iter);
        c.tol = j.value("tol", c.tol);
        c.reg_covar = j.value("reg_covar", c.reg_covar);
        out = c;
        break;
      }
      case Algorithm::Agglomerative: {
        AgglomerativeConfig c;
        c.k = j.value("k", c.k);
        c.linkage = detail::enum_from(j, "linkage", c.linkage);
        out = c;
        break;
      }
      case Algorithm::Dbscan: {
        DbscanConfig c;
        c.eps = j.value("eps", c.eps);
        c.min_samples = j.value("min_samples", c.min_samples);
        out = c;
        break;
      }
    }
    validate(out);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json config_to_json(const AlgoConfig& c) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, c);
}

// Short human-readable form used in CSV tables, e.g. {k=2, linkage=ward}.
inline std::string describe(const AlgoConfig& c) {
  auto j = config_to_json(c);
  std::string out = "{";
  bool first = true;
  for (const auto& key : {"k", "init", "n_init", "covariance", "linkage", "eps", "min_samples"}) {
    if (!j.contains(key)) continue;
    if (!first) out += ", ";
    first = false;
    const auto& v = j.at(key);
    out += std::string(key) + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  return out + "}";
}

}  // namespace clusterscreen
