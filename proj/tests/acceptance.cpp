// Acceptance suite. One line per criterion.
//
//   acceptance --properties [N]     criteria 6-13, or only N (synthetic data)
//   acceptance --dataset <csv>      criteria 1-5 (adult screening CSV)
//
// Exit status: 0 all passed, 1 at least one failed, 77 dataset not found.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clusterscreen/clusterscreen.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace cs = clusterscreen;
namespace fs = std::filesystem;

namespace {

constexpr int kSkip = 77;

struct Outcome {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

struct Suite {
  int failures = 0;

  void run(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(o);
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.ok) ++failures;
    char line[96];
    std::snprintf(line, sizeof line, "%s  %2d  ", o.ok ? "PASS" : "FAIL", id);
    char took[32];
    std::snprintf(took, sizeof took, " (%.1fs)", secs);
    std::cout << line << title << (o.detail.empty() ? "" : ": " + o.detail) << took << std::endl;
  }
};

std::string fmt(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

// All set partitions of n points as restricted growth strings.
std::vector<std::vector<int>> set_partitions(std::size_t n) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int mx) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int v = 0; v <= mx + 1; ++v) {
      a[i] = v;
      rec(i + 1, std::max(mx, v));
    }
  };
  rec(1, 0);
  return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, cs::Rng& rng) {
  return rng.sample_distinct(n, n);
}

// --- properties ----------------------------------------------------------------------

void ari_equivalence(Outcome& o) {
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto parts = set_partitions(n);
    std::vector<double> worst_row(parts.size(), 0.0);
    cs::parallel_for(parts.size(), cs::worker_count(), [&](std::size_t i) {
      double w = 0.0;
      for (const auto& v : parts)
        w = std::max(w, std::abs(cs::adjusted_rand_index(parts[i], v) - oracle::ari_pairs(parts[i], v)));
      worst_row[i] = w;
    });
    for (double w : worst_row) worst = std::max(worst, w);
    checked += parts.size() * parts.size();
  }
  cs::Rng rng(6);
  for (int t = 0; t < 1000; ++t) {
    auto u = synth::random_partition(50, 1 + static_cast<int>(rng.below(8)), rng);
    auto v = synth::random_partition(50, 1 + static_cast<int>(rng.below(8)), rng);
    worst = std::max(worst, std::abs(cs::adjusted_rand_index(u, v) - oracle::ari_pairs(u, v)));
    ++checked;
  }
  o.detail = std::to_string(checked) + " partition pairs, max |diff| " + sci(worst);
  if (worst > 1e-12) o.fail(o.detail);
}

void silhouette_equivalence(Outcome& o) {
  cs::Rng rng(7);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.below(58);
    auto X = synth::uniform_points(n, 1 + rng.below(5), rng);
    auto labels = synth::random_partition(n, 2 + static_cast<int>(rng.below(4)), rng);
    if (t % 2)
      for (auto& l : labels)
        if (rng.uniform() < 0.15) l = cs::kNoise;
    labels[0] = 0;
    labels[1] = 1;
    const auto mine = cs::silhouette(X, labels);
    const auto ref = oracle::silhouette(X, labels, true);
    worst = std::max(worst, std::abs(mine.mean - ref.mean));
    for (std::size_t i = 0; i < n; ++i) {
      if (mine.scored[i] != ref.scored[i]) o.fail("scored set differs on instance " + std::to_string(t));
      worst = std::max(worst, std::abs(mine.s[i] - ref.s[i]));
    }
  }
  if (o.ok) o.detail = "100 instances, max |diff| " + sci(worst);
  if (worst > 1e-10) o.fail("max |diff| " + sci(worst));
}

void kmeans_optimality(Outcome& o) {
  cs::Rng rng(8);
  int runs = 0, misses = 0;
  std::string first;
  for (std::size_t n = 2; n <= 8; ++n)
    for (int t = 0; t < 30; ++t) {
      auto X = synth::uniform_points(n, 1 + rng.below(3), rng);
      const double best = oracle::min_two_cluster_sse(X);
      for (auto init : {cs::KMeansInit::KMeansPlusPlus, cs::KMeansInit::Random}) {
        const auto m = cs::kmeans_fit(X, {.k = 2, .init = init, .n_init = 10}, rng.next());
        ++runs;
        if (std::abs(m.inertia - best) > 1e-9 * std::max(1.0, best)) {
          if (!misses++)
            first = "n=" + std::to_string(n) + " " + nlohmann::json(init).get<std::string>() + " inertia " +
                    fmt(m.inertia) + " vs optimum " + fmt(best);
        }
      }
    }
  o.detail = std::to_string(runs) + " runs (n=2..8, both inits)";
  if (misses) o.fail(std::to_string(misses) + " of " + std::to_string(runs) + " runs above the optimum, first " + first);
}

void gmm_monotonicity(Outcome& o) {
  cs::Rng rng(9);
  double worst_drop = 0.0, worst_norm = 0.0;
  int fits = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 10 + rng.below(70), d = 1 + rng.below(4);
    const int k = 1 + static_cast<int>(rng.below(4));
    cs::Matrix X;
    if (t % 2) {
      X = synth::uniform_points(n, d, rng);
    } else {
      std::vector<std::vector<double>> centers(static_cast<std::size_t>(k), std::vector<double>(d));
      for (auto& c : centers)
        for (auto& v : c) v = 6.0 * rng.uniform();
      X = synth::blobs(centers, n / static_cast<std::size_t>(k) + 1, 1.0, rng).X;
    }
    for (auto type : {cs::CovarianceType::Full, cs::CovarianceType::Tied, cs::CovarianceType::Diag,
                      cs::CovarianceType::Spherical}) {
      const auto m = cs::gmm_fit(X, {.k = k, .covariance = type}, rng.next());
      const auto& tr = m.log_likelihood_trace;
      for (std::size_t i = 1; i < tr.size(); ++i) worst_drop = std::max(worst_drop, tr[i - 1] - tr[i]);
      const auto r = cs::gmm_predict_proba(m, X);
      for (std::size_t i = 0; i < r.rows(); ++i) {
        double s = 0.0;
        for (double v : r.row(i)) s += v;
        worst_norm = std::max(worst_norm, std::abs(s - 1.0));
      }
      ++fits;
    }
  }
  o.detail = std::to_string(fits) + " fits, largest LL drop " + sci(worst_drop) + ", max |sum r - 1| " +
             sci(worst_norm);
  if (worst_drop > 1e-7 || worst_norm > 1e-9) o.fail(o.detail);
}

void dbscan_definition(Outcome& o) {
  cs::Rng rng(10);
  for (int t = 0; t < 100 && o.ok; ++t) {
    const std::size_t n = 5 + rng.below(80);
    auto X = synth::uniform_points(n, 1 + rng.below(3), rng);
    const cs::DbscanConfig cfg{.eps = 0.05 + 0.3 * rng.uniform(), .min_samples = 1 + static_cast<int>(rng.below(6))};
    const auto r = cs::dbscan_fit_predict(X, cfg);
    const std::string where = "instance " + std::to_string(t) + ": ";

    std::vector<std::vector<std::size_t>> nb(n);
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        if (oracle::euclid(X, i, j) <= cfg.eps) nb[i].push_back(j);
      core[i] = nb[i].size() >= static_cast<std::size_t>(cfg.min_samples);
    }
    if (core != r.core) o.fail(where + "core flags differ");
    std::set<int> ids, ids_with_core;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.labels[i] == cs::kNoise) {
        if (core[i]) o.fail(where + "core point labeled noise");
        for (auto j : nb[i])
          if (core[j]) o.fail(where + "noise point has a core neighbor");
        continue;
      }
      ids.insert(r.labels[i]);
      if (core[i]) {
        ids_with_core.insert(r.labels[i]);
        for (auto j : nb[i])
          if (core[j] && r.labels[j] != r.labels[i]) o.fail(where + "adjacent cores in different clusters");
      } else {
        bool reached = false;
        for (auto j : nb[i]) reached |= core[j] && r.labels[j] == r.labels[i];
        if (!reached) o.fail(where + "border point not adjacent to a core of its cluster");
      }
    }
    if (ids != ids_with_core) o.fail(where + "cluster without a core point");
    if (static_cast<int>(ids.size()) != r.clusters) o.fail(where + "cluster count mismatch");
  }
  if (o.ok) o.detail = "100 instances";
}

void agglomerative_equivalence(Outcome& o) {
  cs::Rng rng(11);
  int runs = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(29);
    auto X = synth::uniform_points(n, 1 + rng.below(4), rng);
    for (auto linkage : {cs::Linkage::Ward, cs::Linkage::Complete, cs::Linkage::Average, cs::Linkage::Single}) {
      const auto fast = cs::build_dendrogram(X, linkage);
      const auto slow = oracle::naive_hierarchy(X, linkage);
      const std::string where =
          "instance " + std::to_string(t) + " " + nlohmann::json(linkage).get<std::string>() + ": ";
      if (fast.merges.size() != slow.size()) {
        o.fail(where + "merge count differs");
        continue;
      }
      for (std::size_t s = 0; s < slow.size(); ++s) {
        const auto& a = fast.merges[s];
        const auto& b = slow[s];
        if (a.a != b.a || a.b != b.b || a.size != b.size ||
            std::abs(a.distance - b.distance) > 1e-9 * std::max(1.0, b.distance))
          o.fail(where + "step " + std::to_string(s) + " differs");
      }
      ++runs;
    }
  }
  if (o.ok) o.detail = std::to_string(runs) + " merge sequences";
}

void mapping_correctness(Outcome& o) {
  std::size_t cases = 0;
  for (std::size_t n = 2; n <= 10; ++n) {
    const std::uint32_t full = 1u << n;
    for (std::uint32_t am = 1; am + 1 < full; ++am) {  // both clusters non-empty
      cs::Assignment a(n);
      for (std::size_t i = 0; i < n; ++i) a[i] = (am >> i) & 1 ? 7 : 3;
      for (std::uint32_t ym = 0; ym < full; ++ym) {
        cs::BinaryLabels y(n);
        std::size_t straight = 0;  // 3 -> 0, 7 -> 1
        for (std::size_t i = 0; i < n; ++i) {
          y[i] = static_cast<int>((ym >> i) & 1);
          straight += (a[i] == 7) == (y[i] == 1);
        }
        const double best = static_cast<double>(std::max(straight, n - straight)) / static_cast<double>(n);
        const auto m = cs::map_clusters_to_labels(a, y);
        if (m.mapping.method != cs::MappingMethod::Permutation || cs::accuracy(m.mapped, y) != best) {
          o.fail("n=" + std::to_string(n) + " mapping is not the better permutation");
          return;
        }
        ++cases;
      }
    }
  }

  // Row-permuted reruns of the deterministic algorithms give the same partition.
  cs::Rng rng(12);
  int reruns = 0;
  auto check = [&](const cs::Matrix& X, const cs::AlgoConfig& cfg) {
    const auto perm = random_permutation(X.rows(), rng);
    const auto base = cs::fit_assign(cfg, X, X, 0).labels;
    const auto shuffled = cs::fit_assign(cfg, X.select_rows(perm), X.select_rows(perm), 0).labels;
    cs::Assignment back(X.rows());
    for (std::size_t r = 0; r < perm.size(); ++r) back[perm[r]] = shuffled[r];
    const double ari = cs::adjusted_rand_index(base, back);
    if (ari != 1.0) o.fail(cs::describe(cfg) + " ARI after row permutation " + fmt(ari));
    ++reruns;
  };
  for (int t = 0; t < 25; ++t) {
    const std::size_t n = 4 + rng.below(40);
    auto X = synth::uniform_points(n, 1 + rng.below(3), rng);
    for (auto linkage : {cs::Linkage::Ward, cs::Linkage::Complete, cs::Linkage::Average, cs::Linkage::Single})
      check(X, cs::AgglomerativeConfig{.k = 2 + static_cast<int>(rng.below(3)), .linkage = linkage});
  }
  for (int t = 0; t < 25; ++t) {
    // Separated blobs plus stray points: no point is a border of two clusters.
    const std::size_t k = 2 + rng.below(3);
    std::vector<std::vector<double>> centers;
    for (std::size_t c = 0; c < k; ++c) centers.push_back({10.0 * static_cast<double>(c), 0.0});
    auto b = synth::blobs(centers, 5 + rng.below(15), 0.5, rng);
    check(b.X, cs::DbscanConfig{.eps = 1.0 + rng.uniform(), .min_samples = 2 + static_cast<int>(rng.below(4))});
  }
  if (o.ok) o.detail = std::to_string(cases) + " exhaustive assignments, " + std::to_string(reruns) +
                       " permuted reruns";
}

void report_determinism(Outcome& o) {
  const auto dir = fs::temp_directory_path() / "clusterscreen_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  { std::ofstream(dir / "data.csv") << synth::screening_csv(300, 13); }
  auto strip = [](const fs::path& p) {
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in);
    j.erase("metadata");
    return j.dump(2);
  };
  std::vector<std::string> bodies;
  for (unsigned threads : {1u, cs::worker_count()}) {
    cs::RunConfig cfg;
    cfg.data_path = (dir / "data.csv").string();
    cfg.algorithms = {cs::Algorithm::KMeans, cs::Algorithm::Gmm, cs::Algorithm::Agglomerative, cs::Algorithm::Dbscan};
    cfg.out_dir = (dir / ("run" + std::to_string(bodies.size()))).string();
    cfg.threads = threads;
    cs::run_pipeline(cfg);
    bodies.push_back(strip(fs::path(cfg.out_dir) / "report.json"));
  }
  if (bodies[0] != bodies[1]) o.fail("report bodies differ");
  else o.detail = "two runs, " + std::to_string(bodies[0].size()) + " identical bytes";
  fs::remove_all(dir);
}

struct Property {
  int id;
  const char* title;
  void (*body)(Outcome&);
};

constexpr Property kProperties[] = {
    {6, "ARI matches pair-counting oracle", ari_equivalence},
    {7, "silhouette matches distance-table oracle", silhouette_equivalence},
    {8, "K-Means reaches exhaustive SSE optimum", kmeans_optimality},
    {9, "GMM EM log-likelihood monotone, responsibilities normalized", gmm_monotonicity},
    {10, "DBSCAN labels satisfy the core/border/noise definitions", dbscan_definition},
    {11, "Agglomerative merges match naive recomputation", agglomerative_equivalence},
    {12, "mapping picks the better permutation; relabeling invariance", mapping_correctness},
    {13, "report JSON byte-identical across runs", report_determinism},
};

// only == 0 runs every property criterion.
int run_properties(int only) {
  Suite s;
  bool any = false;
  for (const auto& p : kProperties)
    if (only == 0 || only == p.id) {
      s.run(p.id, p.title, p.body);
      any = true;
    }
  if (!any) {
    std::cerr << "no property criterion " << only << "\n";
    return 2;
  }
  return s.failures ? 1 : 0;
}

// --- dataset ---------------------------------------------------------------------------

const nlohmann::json& row_for(const nlohmann::json& table, const std::string& algorithm) {
  for (const auto& r : table)
    if (r.at("algorithm") == algorithm) return r;
  throw std::runtime_error("no row for " + algorithm);
}

int run_dataset(const std::string& path) {
  if (path.empty() || !fs::exists(path)) {
    std::cout << "SKIP  1-5 dataset not found at '" << path << "'" << std::endl;
    return kSkip;
  }
  constexpr std::uint64_t seed = 42;
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = cs::prepare(cs::load_csv(path));
  cs::RunConfig cfg;
  cfg.data_path = path;
  cfg.algorithms = {cs::Algorithm::KMeans, cs::Algorithm::Gmm, cs::Algorithm::Agglomerative, cs::Algorithm::Dbscan};
  cfg.seed = seed;
  cfg.threads = cs::worker_count();
  const auto report = cs::build_report(cfg, data, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "info  dataset " << data.features.rows() << " x " << data.features.cols() << ", pipeline " << fmt(secs, 1)
            << "s" << std::endl;

  const auto& X = data.features;
  const auto& y = data.encoded.truth;
  const auto gmm = cs::final_fit(X, y, cs::GmmConfig{.k = 2, .covariance = cs::CovarianceType::Spherical}, seed);
  const auto km = cs::final_fit(X, y, cs::KMeansConfig{.k = 2, .init = cs::KMeansInit::Random, .n_init = 10}, seed);
  const auto& t1 = report.body.at("table1");

  Suite s;
  s.run(1, "full-data GMM (spherical) accuracy >= 0.93, ARI >= 0.75, best model", [&](Outcome& o) {
    o.detail = "accuracy " + fmt(gmm.metrics.accuracy) + ", ARI " + fmt(gmm.metrics.ari) + ", best " +
               report.body.at("best_full_model").dump();
    if (gmm.metrics.accuracy < 0.93 || gmm.metrics.ari < 0.75 || report.body.at("best_full_model") != "gmm")
      o.fail(o.detail);
  });
  s.run(2, "full-data K-Means (random init) accuracy >= 0.90", [&](Outcome& o) {
    o.detail = "accuracy " + fmt(km.metrics.accuracy);
    if (km.metrics.accuracy < 0.90) o.fail(o.detail);
  });
  s.run(3, "full-data silhouettes within 0.05 (K-Means 0.161951, GMM 0.162232)", [&](Outcome& o) {
    const double ks = km.metrics.silhouette.value_or(NAN), gs = gmm.metrics.silhouette.value_or(NAN);
    o.detail = "K-Means " + fmt(ks) + ", GMM " + fmt(gs);
    if (!(std::abs(ks - 0.161951) <= 0.05) || !(std::abs(gs - 0.162232) <= 0.05)) o.fail(o.detail);
  });
  s.run(4, "grid winners: spherical, ward, K-Means inits within 0.02, DBSCAN (1.2, 3)", [&](Outcome& o) {
    const auto& g = row_for(t1, "gmm").at("best_config");
    const auto& a = row_for(t1, "agglomerative").at("best_config");
    const auto& d = row_for(t1, "dbscan").at("best_config");
    double acc[2] = {NAN, NAN};
    for (const auto& c : row_for(t1, "kmeans").at("cells"))
      acc[c.at("config").at("init") == "random" ? 1 : 0] = c.at("mean_accuracy").get<double>();
    const double gap = std::abs(acc[0] - acc[1]);
    o.detail = "gmm " + g.at("covariance").get<std::string>() + ", agglomerative " +
               a.at("linkage").get<std::string>() + ", kmeans gap " + fmt(gap, 4) + ", dbscan (" +
               d.at("eps").dump() + ", " + d.at("min_samples").dump() + ")";
    if (g.at("covariance") != "spherical" || a.at("linkage") != "ward" || !(gap <= 0.02) ||
        d.at("eps").get<double>() != 1.2 || d.at("min_samples").get<int>() != 3)
      o.fail(o.detail);
  });
  s.run(5, "CV mean accuracies within 0.04 of 0.9247 / 0.9588 / 0.8763 / 0.7359", [&](Outcome& o) {
    const std::pair<const char*, double> expected[] = {
        {"kmeans", 0.9247}, {"gmm", 0.9588}, {"agglomerative", 0.8763}, {"dbscan", 0.7359}};
    std::string parts;
    for (const auto& [name, target] : expected) {
      const double got = row_for(t1, name).at("mean_accuracy").get<double>();
      parts += std::string(parts.empty() ? "" : ", ") + name + " " + fmt(got, 4);
      if (!(std::abs(got - target) <= 0.04)) o.ok = false;
    }
    const double agg_full = row_for(report.body.at("table2"), "agglomerative").at("metrics").at("accuracy");
    o.detail = parts + "; agglomerative full-data " + fmt(agg_full, 4);
    if (!o.ok) {
      o.ok = true;
      o.fail(o.detail);
    }
  });
  return s.failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args[0] == "--properties") return run_properties(args.size() > 1 ? std::stoi(args[1]) : 0);
  if (!args.empty() && args[0] == "--dataset") {
    std::string path = args.size() > 1 ? args[1] : "";
    if (const char* env = std::getenv("CLUSTER_SCREEN_DATA"); env && *env) path = env;
    return run_dataset(path);
  }
  std::cerr << "usage: acceptance --properties | --dataset <csv>\n";
  return 2;
}
