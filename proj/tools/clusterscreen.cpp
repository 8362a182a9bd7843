// clusterscreen: run the clustering benchmark and regenerate figure data.
//
//   clusterscreen run --data <csv> [--algorithms kmeans,gmm,agglomerative,dbscan]
//                     [--folds 5] [--seed 42] [--out <dir>] [--scale-per-fold] [--grid <json>]
//   clusterscreen figures --report <json> --out <dir>
//
// Exit codes: 0 ok, 1 invalid configuration, 2 ingest failure, 3 internal error.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "clusterscreen/clusterscreen.hpp"

namespace cs = clusterscreen;

namespace {

std::vector<cs::Algorithm> parse_algorithms(const std::string& list) {
  std::vector<cs::Algorithm> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    auto a = cs::parse_algorithm(item);
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  if (out.empty()) throw cs::ConfigError("--algorithms is empty");
  return out;
}

void print_summary(const nlohmann::json& report) {
  std::cout << cs::table1_csv(report) << "\n" << cs::table2_csv(report);
  if (!report.at("best_full_model").is_null())
    std::cout << "\nbest full-data model: " << report.at("best_full_model").get<std::string>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised clustering benchmark for screening data"};
  app.require_subcommand(1);

  cs::RunConfig cfg;
  std::string algorithms = "kmeans,gmm,agglomerative,dbscan";
  std::string code_order = "first-appearance";
  std::string grid;
  auto* run = app.add_subcommand("run", "Preprocess, grid-search, refit, and write the report");
  run->add_option("--data", cfg.data_path, "Screening CSV")->required();
  run->add_option("--algorithms", algorithms, "Comma-separated subset of kmeans,gmm,agglomerative,dbscan")
      ->capture_default_str();
  run->add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
  run->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  run->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
  run->add_flag("--scale-per-fold", cfg.scale_per_fold, "Refit the scaler on each training fold");
  run->add_option("--grid", grid, "JSON file with per-algorithm grid overrides");
  run->add_option("--code-order", code_order, "Category code order: first-appearance or sorted")
      ->check(CLI::IsMember({"first-appearance", "sorted"}))
      ->capture_default_str();

  std::string report_path, figures_out;
  auto* figures = app.add_subcommand("figures", "Write figure data files from an existing report");
  figures->add_option("--report", report_path, "report.json from a previous run")->required();
  figures->add_option("--out", figures_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      cfg.algorithms = parse_algorithms(algorithms);
      if (!grid.empty()) cfg.grid_path = grid;
      cfg.code_order = code_order == "sorted" ? cs::CodeOrder::Sorted : cs::CodeOrder::FirstAppearance;
      cfg.threads = cs::worker_count();
      const auto report = cs::run_pipeline(cfg, &std::cerr);
      print_summary(report.body);
      std::cerr << "report written to " << cfg.out_dir << "\n";
    } else if (*figures) {
      std::ifstream in(report_path);
      if (!in) throw cs::IngestError("cannot open " + report_path);
      nlohmann::json report;
      try {
        in >> report;
      } catch (const nlohmann::json::exception& e) {
        throw cs::IngestError("report: " + std::string(e.what()));
      }
      for (const auto& p : cs::emit_figures(report, figures_out)) std::cout << p.string() << "\n";
    }
    return 0;
  } catch (const cs::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const cs::IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
