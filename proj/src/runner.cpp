#include "fedlab/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace fedlab {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write " + path.string());
  out << body;
}

json summary_json(const ExperimentConfig& cfg, const RunResult& result,
                  std::optional<double> target, bool diverged) {
  json j;
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["seed"] = cfg.seed;
  std::optional<int> rtt;
  if (target && !result.records.empty()) {
    rtt = rounds_to_target(result.records, *target);
  }
  j["rounds_to_target"] = rtt ? json(*rtt) : json(nullptr);
  j["speedup"] = nullptr;  // meaningful in comparison runs only
  const auto [mean50, std50] = final_accuracy_stats(result.records);
  j["final_acc_mean50"] = mean50;
  j["final_acc_std50"] = std50;
  j["b_estimate_final"] =
      result.b_final ? json(result.b_final->b_value) : json(nullptr);
  j["diverged"] = diverged;
  j["rounds_recorded"] = result.records.size();
  j["wall_ms_total"] = result.wall_ms_total;
  return j;
}

void write_manifest(const std::filesystem::path& out_dir,
                    const std::string& canonical, std::uint64_t seed,
                    const std::vector<std::string>& artifacts) {
  json j;
  j["config_hash"] = config_hash_hex(canonical);
  j["seed"] = seed;
  j["started_at"] = timestamp_utc();
  j["artifact_paths"] = artifacts;
  j["code_version"] = FEDLAB_VERSION;
  write_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

ExperimentConfig apply_overrides(ExperimentConfig cfg,
                                 const CliOverrides& overrides) {
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.threads) cfg.threads = *overrides.threads;
  return cfg;
}

int map_error(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataFormatError*>(&e)) return kExitData;
  return kExitConfig;
}

}  // namespace

std::string metrics_csv(const std::vector<RoundRecord>& records) {
  std::string out = "round,train_loss,test_accuracy,grad_norm_sq,elapsed_ms\n";
  for (const auto& r : records) {
    out += std::to_string(r.round);
    out += ',';
    out += fmt17(r.train_loss);
    out += ',';
    out += fmt17(r.test_accuracy);
    out += ',';
    out += fmt17(r.grad_norm_sq);
    out += ",0\n";
  }
  return out;
}

std::pair<double, double> final_accuracy_stats(
    const std::vector<RoundRecord>& records, int window) {
  if (records.empty()) return {0.0, 0.0};
  const std::size_t n = std::min<std::size_t>(window, records.size());
  double mean = 0.0;
  for (std::size_t k = records.size() - n; k < records.size(); ++k) {
    mean += records[k].test_accuracy;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = records.size() - n; k < records.size(); ++k) {
    const double d = records[k].test_accuracy - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

int run_command(const std::string& config_path, const std::string& out_dir,
                const CliOverrides& overrides) {
  try {
    const ParsedConfig parsed = parse_config_file(config_path);
    const auto* single = std::get_if<ExperimentConfig>(&parsed);
    if (!single) {
      std::cerr << "fedlab: config contains a [compare] section; use the "
                   "compare subcommand\n";
      return kExitConfig;
    }
    const ExperimentConfig cfg = apply_overrides(*single, overrides);
    std::filesystem::create_directories(out_dir);

    RunResult result;
    bool diverged = false;
    try {
      result = run_experiment(cfg);
    } catch (const DivergenceError& e) {
      std::cerr << "fedlab: diverged at round " << e.round() << " (client "
                << e.client() << "): " << e.what() << "\n";
      diverged = true;
    }

    const std::filesystem::path dir(out_dir);
    write_file(dir / "metrics.csv", metrics_csv(result.records));
    write_file(dir / "summary.json",
               summary_json(cfg, result, cfg.target_accuracy, diverged).dump(2) +
                   "\n");
    write_manifest(dir, serialize_config(cfg), cfg.seed,
                   {"metrics.csv", "summary.json"});
    return diverged ? kExitDivergence : kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "fedlab: " << e.what() << "\n";
    return map_error(e);
  }
}

int compare_command(const std::string& config_path, const std::string& out_dir,
                    const CliOverrides& overrides) {
  try {
    const ParsedConfig parsed = parse_config_file(config_path);
    const auto* spec_ptr = std::get_if<ComparisonSpec>(&parsed);
    if (!spec_ptr) {
      std::cerr << "fedlab: config has no [compare] section; use the run "
                   "subcommand\n";
      return kExitConfig;
    }
    ComparisonSpec spec = *spec_ptr;
    if (overrides.seed) spec.seeds = {*overrides.seed};
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    struct Row {
      Algorithm algo;
      std::uint64_t seed;
      std::string status = "ok";
      double mean50 = 0.0;
      double std50 = 0.0;
      std::optional<int> rtt;
    };
    std::vector<Row> rows;
    std::vector<std::string> artifacts;

    for (const Algorithm algo : spec.algorithms) {
      for (const std::uint64_t seed : spec.seeds) {
        ExperimentConfig cfg = spec.base;
        cfg.algorithm = algo;
        cfg.seed = seed;
        if (overrides.threads) cfg.threads = *overrides.threads;

        Row row;
        row.algo = algo;
        row.seed = seed;
        std::vector<RoundRecord> records;
        try {
          records = run(cfg);
          row.rtt = rounds_to_target(records, spec.target_accuracy);
          const auto [mean50, std50] = final_accuracy_stats(records);
          row.mean50 = mean50;
          row.std50 = std50;
        } catch (const DivergenceError& e) {
          row.status = "diverged";
          std::cerr << "fedlab: " << algorithm_name(algo) << " seed " << seed
                    << " diverged at round " << e.round() << "\n";
        }
        const std::string curve_name = "curve_" + algorithm_name(algo) +
                                       "_seed" + std::to_string(seed) + ".csv";
        write_file(dir / curve_name, metrics_csv(records));
        artifacts.push_back(curve_name);
        rows.push_back(row);
        std::cerr << "fedlab: finished " << algorithm_name(algo) << " seed "
                  << seed << " (" << row.status << ")\n";
      }
    }

    // FedAvg per seed is the speedup baseline.
    auto fedavg_rounds = [&](std::uint64_t seed) -> std::optional<int> {
      for (const auto& row : rows) {
        if (row.algo == Algorithm::FedAvg && row.seed == seed &&
            row.status == "ok") {
          return row.rtt;
        }
      }
      return std::nullopt;
    };
    const bool has_fedavg =
        std::find(spec.algorithms.begin(), spec.algorithms.end(),
                  Algorithm::FedAvg) != spec.algorithms.end();

    std::string csv =
        "algorithm,seed,final_acc_mean50,final_acc_std50,rounds_to_target,"
        "speedup_vs_fedavg,status\n";
    for (const auto& row : rows) {
      csv += algorithm_name(row.algo);
      csv += ',';
      csv += std::to_string(row.seed);
      csv += ',';
      csv += fmt17(row.mean50);
      csv += ',';
      csv += fmt17(row.std50);
      csv += ',';
      csv += row.rtt ? std::to_string(*row.rtt)
                     : (">" + std::to_string(spec.base.total_rounds));
      csv += ',';
      if (has_fedavg && row.status == "ok") {
        const double s =
            speedup(fedavg_rounds(row.seed), row.rtt, spec.base.total_rounds);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", s);
        csv += buf;
      }
      csv += ',';
      csv += row.status;
      csv += '\n';
    }
    write_file(dir / "comparison.csv", csv);
    artifacts.push_back("comparison.csv");
    write_manifest(dir, serialize_comparison(spec), spec.base.seed, artifacts);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "fedlab: " << e.what() << "\n";
    return map_error(e);
  }
}

}  // namespace fedlab
