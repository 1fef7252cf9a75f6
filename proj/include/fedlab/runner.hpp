#pragma once

#include <optional>
#include <string>

#include "fedlab/config.hpp"

namespace fedlab {

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

// Exit codes shared by the CLI and the process-level tests.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

// Executes a single experiment config and writes metrics.csv, summary.json
// and manifest.json under out_dir. Returns an exit code; errors are logged to
// stderr and data goes to files only.
int run_command(const std::string& config_path, const std::string& out_dir,
                const CliOverrides& overrides = {});

// Executes every (algorithm, seed) pair of a comparison spec; writes one
// learning-curve CSV per run plus comparison.csv and manifest.json.
int compare_command(const std::string& config_path, const std::string& out_dir,
                    const CliOverrides& overrides = {});

// metrics.csv body for a run; 17 significant digits so replays diff clean.
// The elapsed_ms column is pinned to zero: byte-reproducibility of this
// artifact is contractual, so wall time is reported in summary.json instead.
std::string metrics_csv(const std::vector<RoundRecord>& records);

// Mean/std of test accuracy over the last `window` evaluation records.
std::pair<double, double> final_accuracy_stats(
    const std::vector<RoundRecord>& records, int window = 50);

}  // namespace fedlab
