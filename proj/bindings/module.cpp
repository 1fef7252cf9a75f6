#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fedlab/config.hpp"
#include "fedlab/runner.hpp"

namespace py = pybind11;

namespace {

fedlab::GateMode gate_mode_from(const std::string& name) {
  if (name == "identity") return fedlab::GateMode::Identity;
  if (name == "identity_clipped") return fedlab::GateMode::IdentityClipped;
  if (name == "logistic") return fedlab::GateMode::Logistic;
  if (name == "algorithm1") return fedlab::GateMode::Algorithm1;
  if (name == "zero") return fedlab::GateMode::Zero;
  throw fedlab::ConfigError("unknown gate mode '" + name + "'");
}

py::dict records_to_dict(const std::vector<fedlab::RoundRecord>& records) {
  std::vector<int> rounds;
  std::vector<double> loss, acc, grad;
  for (const auto& r : records) {
    rounds.push_back(r.round);
    loss.push_back(r.train_loss);
    acc.push_back(r.test_accuracy);
    grad.push_back(r.grad_norm_sq);
  }
  py::dict d;
  d["round"] = rounds;
  d["train_loss"] = loss;
  d["test_accuracy"] = acc;
  d["grad_norm_sq"] = grad;
  return d;
}

py::dict run_experiment_py(const std::string& config_text,
                           std::optional<std::uint64_t> seed,
                           std::optional<int> threads) {
  auto parsed = fedlab::parse_config_text(config_text);
  auto* cfg_ptr = std::get_if<fedlab::ExperimentConfig>(&parsed);
  if (!cfg_ptr) {
    throw fedlab::ConfigError(
        "comparison configs are not supported here; pass a single-run config");
  }
  fedlab::ExperimentConfig cfg = *cfg_ptr;
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;

  fedlab::RunResult result;
  {
    py::gil_scoped_release release;
    result = fedlab::run_experiment(cfg);
  }
  py::dict out;
  out["records"] = records_to_dict(result.records);
  const auto [mean50, std50] = fedlab::final_accuracy_stats(result.records);
  py::dict summary;
  summary["algorithm"] = fedlab::algorithm_name(cfg.algorithm);
  summary["seed"] = cfg.seed;
  summary["final_acc_mean50"] = mean50;
  summary["final_acc_std50"] = std50;
  if (result.b_final) {
    summary["b_estimate_final"] = result.b_final->b_value;
  } else {
    summary["b_estimate_final"] = py::none();
  }
  if (cfg.target_accuracy) {
    auto rtt = fedlab::rounds_to_target(result.records, *cfg.target_accuracy);
    summary["rounds_to_target"] = rtt ? py::cast(*rtt) : py::none();
  } else {
    summary["rounds_to_target"] = py::none();
  }
  out["summary"] = summary;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic federated-learning simulation testbed";
  m.attr("__version__") = FEDLAB_VERSION;

  m.def("run_experiment", &run_experiment_py, py::arg("config_text"),
        py::arg("seed") = py::none(), py::arg("threads") = py::none(),
        "Run one experiment from config text; returns records and a summary.");

  m.def(
      "dirichlet_partition",
      [](const std::vector<int>& labels, int n_clients, double concentration,
         std::uint64_t seed) {
        auto rng = fedlab::derive_stream(seed, "partition", 0);
        return fedlab::dirichlet_partition(labels, n_clients, concentration, rng)
            .assignments;
      },
      py::arg("labels"), py::arg("n_clients"), py::arg("concentration"),
      py::arg("seed") = 1,
      "Label-skew split by symmetric Dirichlet proportions; exact cover.");

  m.def(
      "stratified_iid_partition",
      [](const std::vector<int>& labels, int n_clients, std::uint64_t seed) {
        auto rng = fedlab::derive_stream(seed, "partition", 0);
        return fedlab::stratified_iid_partition(labels, n_clients, rng)
            .assignments;
      },
      py::arg("labels"), py::arg("n_clients"), py::arg("seed") = 1);

  m.def(
      "participation_ratio",
      [](int count, int round, int cohort_size, int n_clients, double epsilon) {
        const double mu = static_cast<double>(cohort_size) / n_clients * round;
        return count / (mu + epsilon);
      },
      py::arg("count"), py::arg("round"), py::arg("cohort_size"),
      py::arg("n_clients"), py::arg("epsilon") = 1e-6,
      "Observed/expected selection ratio r = c / (mu + eps).");

  m.def(
      "gate",
      [](const std::string& mode, double r, double alpha, double beta,
         double center, double scale) {
        fedlab::GateConfig cfg;
        cfg.mode = gate_mode_from(mode);
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.logistic_center = center;
        cfg.logistic_scale = scale;
        return fedlab::gate(cfg, r);
      },
      py::arg("mode"), py::arg("r"), py::arg("alpha") = 0.05,
      py::arg("beta") = 0.0, py::arg("center") = 1.0, py::arg("scale") = 0.25,
      "Monotone gate value for a participation ratio.");

  m.def(
      "rounds_to_target",
      [](const std::vector<int>& rounds, const std::vector<double>& accuracies,
         double target) -> std::optional<int> {
        std::vector<fedlab::RoundRecord> records(rounds.size());
        for (std::size_t k = 0; k < rounds.size(); ++k) {
          records[k].round = rounds[k];
          records[k].test_accuracy = accuracies.at(k);
        }
        return fedlab::rounds_to_target(records, target);
      },
      py::arg("rounds"), py::arg("accuracies"), py::arg("target"),
      "First round whose accuracy reaches the target, or None.");

  m.def(
      "speedup",
      [](std::optional<int> baseline, std::optional<int> method, int rounds) {
        return fedlab::speedup(baseline, method, rounds);
      },
      py::arg("baseline_rounds"), py::arg("method_rounds"),
      py::arg("total_rounds"),
      "Rounds-to-target ratio versus a baseline, flooring absences at T.");
}
