#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedlab/algorithms.hpp"
#include "fedlab/datasets.hpp"
#include "fedlab/sampling.hpp"

namespace fedlab {

enum class TaskKind { Mnist, SyntheticQuadratic, SyntheticLogistic };
enum class PartitionKind { Iid, Dirichlet };

struct TaskConfig {
  TaskKind kind = TaskKind::SyntheticQuadratic;
  std::string data_dir;  // mnist; empty falls back to $FEDLAB_DATA_DIR
  std::vector<int> hidden = {200, 200};  // mnist FCN hidden widths
  int dim = 10;                          // quadratic
  double heterogeneity = 1.0;            // quadratic center spread
  double l_max = 4.0;                    // quadratic top eigenvalue
  int features = 20;                     // logistic
  int classes = 5;                       // logistic
  int samples = 2000;                    // logistic train size
  int test_samples = 500;                // logistic held-out size

  bool operator==(const TaskConfig&) const = default;
};

struct PartitionConfig {
  PartitionKind kind = PartitionKind::Iid;
  double concentration = 0.3;

  bool operator==(const PartitionConfig&) const = default;
};

struct ExperimentConfig {
  TaskConfig task;
  int n_clients = 10;
  int cohort_size = 10;
  int total_rounds = 10;
  PartitionConfig partition;
  Algorithm algorithm = Algorithm::FedAvg;
  AlgoParams algo;
  LocalRunConfig run;
  GateConfig gate_cfg;
  ExpectationHorizon horizon = ExpectationHorizon::CurrentRound;
  double epsilon = 1e-6;
  std::uint64_t seed = 1;
  int eval_every = 1;
  int threads = 1;
  int eval_subset = 2048;
  std::optional<double> target_accuracy;

  bool operator==(const ExperimentConfig&) const = default;
};

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;  // 0 for quadratic tasks (undefined)
  double grad_norm_sq = 0.0;
  std::vector<int> participated;
  double elapsed_ms = 0.0;
};

struct DissimilarityEstimate {
  double b_value = 1.0;
  int at_round = 0;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::optional<DissimilarityEstimate> b_final;
  double wall_ms_total = 0.0;
};

// Materialized task plus all mutable federation state; supports stepwise
// execution so the analysis ops can replay rounds from a snapshot.
class FederatedEngine {
 public:
  explicit FederatedEngine(const ExperimentConfig& cfg);
  ~FederatedEngine();
  FederatedEngine(const FederatedEngine&) = delete;
  FederatedEngine& operator=(const FederatedEngine&) = delete;

  // Executes one communication round; returns the participating cohort.
  // `cohort_rng` overrides the round's cohort draw (used for resampling).
  std::vector<int> step(RngStream* cohort_rng = nullptr);

  RoundRecord evaluate(const std::vector<int>& participated) const;

  int rounds_done() const;
  const ServerState& server() const;
  const ExperimentConfig& config() const;
  int client_count() const;

  // Exact global objective and gradient; synthetic tasks only.
  double exact_global_loss() const;
  ParamVector exact_global_grad() const;
  // Closed-form optimum value for quadratic tasks.
  double quadratic_optimum_value() const;

  DissimilarityEstimate estimate_dissimilarity(
      const std::vector<int>& clients, double eps_div = 1e-12) const;

  struct Snapshot;
  std::unique_ptr<Snapshot> snapshot() const;
  void restore(const Snapshot& snap);

  // Structural check: no test sample index may appear in any client shard.
  bool evaluation_isolated() const;

  // O(d) structural bound: persistent doubles per client.
  std::size_t client_state_floats(int client) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the full loop; divergence errors propagate with round and client.
std::vector<RoundRecord> run(const ExperimentConfig& cfg);
RunResult run_experiment(const ExperimentConfig& cfg);

// Smallest recorded round reaching the target accuracy.
std::optional<int> rounds_to_target(const std::vector<RoundRecord>& records,
                                    double target_acc);

// Table-3 style speedup; an absent round count is floored at T.
double speedup(std::optional<int> baseline_rounds,
               std::optional<int> method_rounds, int total_rounds);

struct DescentReport {
  double decrease_fraction = 0.0;  // window-10 moving average non-increase rate
  double loglog_slope = 0.0;       // slope of log(min-so-far ||grad||^2) vs log t
  std::vector<double> p_hat;       // empirical descent coefficients
  double sum_grad_norm_sq = 0.0;
  double f_initial = 0.0;
  double f_final = 0.0;
  double f_star = 0.0;
  double bound_constant = 0.0;  // sum_grad_norm_sq / (f_initial - f_star)
  double final_grad_norm_sq = 0.0;
};

// Instrumented run verifying the per-round expected descent; the expectation
// over cohorts is estimated by resampling the round from a snapshot.
DescentReport descent_check(const ExperimentConfig& cfg, int resample_count = 8,
                            int p_hat_every = 10);

}  // namespace fedlab
