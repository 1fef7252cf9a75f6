#pragma once

#include <string>
#include <variant>
#include <vector>

#include "fedlab/orchestrator.hpp"

namespace fedlab {

// Multi-run protocol: each algorithm runs on the shared task for every seed
// and the results are compared against FedAvg at a fixed target accuracy.
struct ComparisonSpec {
  ExperimentConfig base;  // shared settings; base.algorithm is ignored
  std::vector<Algorithm> algorithms;
  double target_accuracy = 0.97;
  std::vector<std::uint64_t> seeds;
};

using ParsedConfig = std::variant<ExperimentConfig, ComparisonSpec>;

// Flat sectioned key=value format; unknown sections or keys are rejected and
// every invariant is checked at parse time.
ParsedConfig parse_config_text(const std::string& text);
ParsedConfig parse_config_file(const std::string& path);

// Canonical round-trippable form: parse(serialize(cfg)) == cfg.
std::string serialize_config(const ExperimentConfig& cfg);
std::string serialize_comparison(const ComparisonSpec& spec);

// Stable digest of the canonicalized config.
std::string config_hash_hex(const std::string& canonical_text);

std::string algorithm_name(Algorithm algo);
Algorithm algorithm_from_name(const std::string& name);

}  // namespace fedlab
