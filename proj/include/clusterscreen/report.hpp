#pragma once

// End-to-end run: ingest -> grid search per algorithm -> full-data refit, and
// the files written from the result (JSON report, summary CSVs, plot data).

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "clusterscreen/harness.hpp"
#include "clusterscreen/ingest.hpp"

namespace clusterscreen {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  std::string data_path;
  std::vector<Algorithm> algorithms{Algorithm::KMeans, Algorithm::Gmm, Algorithm::Agglomerative,
                                    Algorithm::Dbscan};
  int folds = 5;
  std::uint64_t seed = 42;
  std::string out_dir = "report";
  bool scale_per_fold = false;
  std::optional<std::string> grid_path;
  CodeOrder code_order = CodeOrder::FirstAppearance;
  unsigned threads = 1;
};

inline void validate(const RunConfig& c) {
  if (c.folds < 2) throw ConfigError("folds must be >= 2");
  if (c.algorithms.empty()) throw ConfigError("at least one algorithm is required");
  if (c.data_path.empty()) throw ConfigError("--data is required");
}

// Dataset after ingest, ready for clustering.
struct PreparedData {
  EncodedTable encoded;
  ScalerParams scaler;
  FeatureMatrix features;
  CleanSummary cleaning;
  std::string fingerprint;
};

// SHA-256 (hex) over the encoded matrix and labels: row count, column count,
// then every value as little-endian IEEE-754, then every label byte.
inline std::string fingerprint(const Matrix& m, const BinaryLabels& y) {
  std::vector<unsigned char> bytes;
  auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(v >> (8 * b)));
  };
  put_u64(m.rows());
  put_u64(m.cols());
  for (double v : m.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(bits);
  }
  for (int v : y) bytes.push_back(static_cast<unsigned char>(v));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

inline PreparedData prepare(const RawTable& raw, CodeOrder order = CodeOrder::FirstAppearance) {
  PreparedData p;
  const RawTable cleaned = clean(raw, {}, &p.cleaning);
  p.encoded = encode(cleaned, std::nullopt, order);
  if (p.encoded.values.rows() != raw.rows.size()) throw InvariantError("ingest dropped rows");
  if (is_screening_schema(raw.header)) {
    if (p.encoded.codebook.encoded_columns.size() != 7)
      throw InvariantError("screening data: expected 7 label-encoded columns, got " +
                           std::to_string(p.encoded.codebook.encoded_columns.size()));
    if (p.encoded.values.cols() != 19)
      throw InvariantError("screening data: expected 19 features, got " +
                           std::to_string(p.encoded.values.cols()));
  }
  p.scaler = fit_scaler(p.encoded.values);
  p.features = apply_scaler(p.encoded.values, p.scaler);
  p.fingerprint = fingerprint(p.encoded.values, p.encoded.truth);
  return p;
}

// Grid overrides: {"<algorithm>": [ {config}, ... ], ...}; entries may omit
// "algorithm". Algorithms not listed keep their default grid.
inline std::map<Algorithm, std::vector<AlgoConfig>> parse_grid_overrides(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("grid overrides must be a JSON object");
  std::map<Algorithm, std::vector<AlgoConfig>> out;
  for (const auto& [name, cells] : j.items()) {
    const Algorithm a = parse_algorithm(name);
    if (!cells.is_array() || cells.empty()) throw ConfigError("grid for " + name + " must be a non-empty array");
    for (const auto& c : cells) {
      auto cfg = config_from_json(c, a);
      if (algorithm_of(cfg) != a) throw ConfigError("grid for " + name + " contains another algorithm");
      out[a].push_back(cfg);
    }
  }
  return out;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json cell_to_json(const CellResult& c) {
  auto folds = nlohmann::json::array();
  for (const auto& f : c.folds) folds.push_back(f);
  return {{"config", config_to_json(c.config)},
          {"params", describe(c.config)},
          {"mean_accuracy", c.mean_accuracy},
          {"mean_ari", c.mean_ari},
          {"mean_silhouette", optional_number(c.mean_silhouette)},
          {"missing_silhouette_folds", c.missing_silhouette_folds},
          {"folds", folds}};
}

}  // namespace detail

struct Report {
  nlohmann::json body;      // deterministic for fixed (data, config)
  nlohmann::json metadata;  // timestamps and other run-specific facts

  nlohmann::json combined() const {
    nlohmann::json j = body;
    j["metadata"] = metadata;
    return j;
  }
};

inline Report build_report(const RunConfig& cfg, const PreparedData& data,
                           const std::map<Algorithm, std::vector<AlgoConfig>>& overrides,
                           std::ostream* log = nullptr) {
  const auto& X = data.features;
  const auto& y = data.encoded.truth;
  const auto plan = kfold_split(X.rows(), static_cast<std::size_t>(cfg.folds), cfg.seed);
  const CvOptions opts{.scale_per_fold = cfg.scale_per_fold, .threads = std::max(1u, cfg.threads)};

  Report r;
  auto& b = r.body;
  b["schema_version"] = kSchemaVersion;
  nlohmann::json algos = nlohmann::json::array();
  for (auto a : cfg.algorithms) algos.push_back(algorithm_name(a));
  b["config"] = {{"algorithms", algos},
                 {"folds", cfg.folds},
                 {"seed", cfg.seed},
                 {"scale_per_fold", cfg.scale_per_fold},
                 {"code_order", cfg.code_order == CodeOrder::Sorted ? "sorted" : "first-appearance"},
                 {"grid_overrides", static_cast<bool>(cfg.grid_path)}};
  std::size_t positives = 0;
  for (int v : y) positives += static_cast<std::size_t>(v);
  auto folds = nlohmann::json::array();
  for (const auto& f : plan.test_folds) folds.push_back(f.size());
  b["dataset"] = {{"fingerprint", data.fingerprint},
                  {"rows", X.rows()},
                  {"features", X.cols()},
                  {"feature_names", data.encoded.feature_names},
                  {"class_counts", {{"NO", y.size() - positives}, {"ASD", positives}}},
                  {"cleaning",
                   {{"mean_age", data.cleaning.mean_age},
                    {"imputed_age", data.cleaning.imputed_age},
                    {"ages_filled", data.cleaning.ages_filled},
                    {"ethnicities_filled", data.cleaning.ethnicities_filled}}},
                  {"codebook", data.encoded.codebook},
                  {"scaler", data.scaler},
                  {"fold_sizes", folds}};

  auto table1 = nlohmann::json::array();
  auto table2 = nlohmann::json::array();
  auto gaps = nlohmann::json::array();
  std::optional<std::pair<double, std::string>> top;
  for (auto a : cfg.algorithms) {
    const auto it = overrides.find(a);
    const auto grid = it != overrides.end() ? it->second : default_grid(a);
    const GridResult g = grid_search(X, y, a, grid, plan, cfg.seed, opts);
    const auto& best = g.best();
    if (log)
      for (const auto& c : g.cells)
        if (!c.missing_silhouette_folds.empty())
          *log << "note: " << algorithm_name(a) << " " << describe(c.config) << ": silhouette undefined on "
               << c.missing_silhouette_folds.size() << " fold(s), excluded from its mean\n";

    auto cells = nlohmann::json::array();
    for (const auto& c : g.cells) cells.push_back(detail::cell_to_json(c));
    table1.push_back({{"algorithm", algorithm_name(a)},
                      {"title", algorithm_title(a)},
                      {"best_config", config_to_json(best.config)},
                      {"best_params", describe(best.config)},
                      {"mean_accuracy", best.mean_accuracy},
                      {"mean_ari", best.mean_ari},
                      {"mean_silhouette", detail::optional_number(best.mean_silhouette)},
                      {"cells", cells}});

    const FinalResult fin = final_fit(X, y, best.config, cfg.seed);
    nlohmann::json sil = nullptr;
    if (fin.metrics.silhouette) {
      std::vector<double> values;
      std::vector<int> clusters;
      for (std::size_t i = 0; i < fin.labels.size(); ++i)
        if (fin.silhouette.scored[i]) {
          values.push_back(fin.silhouette.s[i]);
          clusters.push_back(fin.labels[i]);
        }
      sil = {{"cluster", clusters}, {"value", values}};
    }
    table2.push_back({{"algorithm", algorithm_name(a)},
                      {"title", algorithm_title(a)},
                      {"config", config_to_json(fin.config)},
                      {"params", describe(fin.config)},
                      {"metrics", fin.metrics},
                      {"labels", fin.labels},
                      {"silhouette_values", sil},
                      {"model", fin.model}});
    gaps.push_back({{"algorithm", algorithm_name(a)},
                    {"cv_mean_accuracy", best.mean_accuracy},
                    {"full_accuracy", fin.metrics.accuracy},
                    {"difference", fin.metrics.accuracy - best.mean_accuracy}});
    if (!top || fin.metrics.accuracy > top->first) top = {fin.metrics.accuracy, std::string(algorithm_name(a))};
  }
  b["table1"] = table1;
  b["table2"] = table2;
  b["cv_vs_full"] = gaps;
  b["best_full_model"] = top ? nlohmann::json(top->second) : nlohmann::json(nullptr);
  return r;
}

// --- file emission -------------------------------------------------------------------

namespace detail {

// Numbers in CSVs use the JSON serializer's formatting so both agree exactly.
inline std::string num(const nlohmann::json& v) { return v.is_null() ? "" : v.dump(); }

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

}  // namespace detail

inline std::string table1_csv(const nlohmann::json& report) {
  std::string s = "Algorithm,Best Params,Avg. Accuracy,Avg. ARI,Avg. Silhouette\n";
  for (const auto& row : report.at("table1"))
    s += row.at("title").get<std::string>() + "," + detail::csv_quote(row.at("best_params").get<std::string>()) + "," +
         detail::num(row.at("mean_accuracy")) + "," + detail::num(row.at("mean_ari")) + "," +
         detail::num(row.at("mean_silhouette")) + "\n";
  return s;
}

inline std::string grid_csv(const nlohmann::json& report) {
  std::string s = "Algorithm,Params,Avg. Accuracy,Avg. ARI,Avg. Silhouette\n";
  for (const auto& row : report.at("table1"))
    for (const auto& c : row.at("cells"))
      s += row.at("title").get<std::string>() + "," + detail::csv_quote(c.at("params").get<std::string>()) + "," +
           detail::num(c.at("mean_accuracy")) + "," + detail::num(c.at("mean_ari")) + "," +
           detail::num(c.at("mean_silhouette")) + "\n";
  return s;
}

inline std::string table2_csv(const nlohmann::json& report) {
  std::string s = "Model,Accuracy,ARI,Silhouette\n";
  for (const auto& row : report.at("table2")) {
    const auto& m = row.at("metrics");
    s += row.at("title").get<std::string>() + "," + detail::num(m.at("accuracy")) + "," + detail::num(m.at("ari")) +
         "," + detail::num(m.at("silhouette")) + "\n";
  }
  return s;
}

// figure1_accuracy.csv, figure2_confusion_<model>.csv, figure3_silhouette_<model>.csv
inline std::vector<std::filesystem::path> emit_figures(const nlohmann::json& report, const std::filesystem::path& dir) {
  if (!report.contains("table2")) throw std::runtime_error("report has no final results");
  detail::ensure_dir(dir);
  std::vector<std::filesystem::path> written;
  std::string fig1 = "model,accuracy\n";
  for (const auto& row : report.at("table2")) {
    const auto name = row.at("algorithm").get<std::string>();
    const auto& m = row.at("metrics");
    fig1 += row.at("title").get<std::string>() + "," + detail::num(m.at("accuracy")) + "\n";

    const auto c = m.at("confusion").get<ConfusionMatrix2x2>();
    const auto p2 = dir / ("figure2_confusion_" + name + ".csv");
    detail::write_file(p2, "actual,predicted_NO,predicted_ASD\nNO," + std::to_string(c.tn) + "," +
                               std::to_string(c.fp) + "\nASD," + std::to_string(c.fn) + "," +
                               std::to_string(c.tp) + "\n");
    written.push_back(p2);

    const auto& sil = row.at("silhouette_values");
    if (sil.is_null()) continue;
    const auto clusters = sil.at("cluster").get<std::vector<int>>();
    const auto values = sil.at("value").get<std::vector<double>>();
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (clusters[a] != clusters[b]) return clusters[a] < clusters[b];
      return values[a] > values[b];
    });
    std::string fig3 = "cluster,rank,silhouette\n";
    int prev = kNoise - 1;
    std::size_t rank = 0;
    for (auto i : order) {
      if (clusters[i] != prev) rank = 0;
      prev = clusters[i];
      fig3 += std::to_string(clusters[i]) + "," + std::to_string(rank++) + "," + nlohmann::json(values[i]).dump() + "\n";
    }
    const auto p3 = dir / ("figure3_silhouette_" + name + ".csv");
    detail::write_file(p3, fig3);
    written.push_back(p3);
  }
  const auto p1 = dir / "figure1_accuracy.csv";
  detail::write_file(p1, fig1);
  written.insert(written.begin(), p1);
  return written;
}

inline void write_report(const Report& r, const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  detail::write_file(dir / "report.json", r.combined().dump(2) + "\n");
  detail::write_file(dir / "table1.csv", table1_csv(r.body));
  detail::write_file(dir / "table1_all_cells.csv", grid_csv(r.body));
  detail::write_file(dir / "table2.csv", table2_csv(r.body));
  emit_figures(r.body, dir);
}

inline Report run_pipeline(const RunConfig& cfg, std::ostream* log = nullptr) {
  validate(cfg);
  std::map<Algorithm, std::vector<AlgoConfig>> overrides;
  if (cfg.grid_path) {
    std::ifstream in(*cfg.grid_path);
    if (!in) throw ConfigError("cannot open grid file " + *cfg.grid_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("grid file: " + std::string(e.what()));
    }
    overrides = parse_grid_overrides(j);
  }
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData data = prepare(load_csv(cfg.data_path), cfg.code_order);
  Report r = build_report(cfg, data, overrides, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.metadata = {{"started_at", started},
                {"finished_at", utc_now()},
                {"elapsed_seconds", secs},
                {"data_path", cfg.data_path},
                {"threads", cfg.threads}};
  write_report(r, cfg.out_dir);
  return r;
}

}  // namespace clusterscreen
