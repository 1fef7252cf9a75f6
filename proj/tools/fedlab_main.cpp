#include <CLI11.hpp>

#include <optional>
#include <string>

#include "fedlab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fedlab: deterministic federated-learning simulation testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config file")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--threads", threads, "intra-round worker threads");
  };

  CLI::App* run_cmd =
      app.add_subcommand("run", "execute a single experiment config");
  add_common(run_cmd);
  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "run an algorithm comparison and tabulate speedups");
  add_common(compare_cmd);

  CLI11_PARSE(app, argc, argv);

  fedlab::CliOverrides overrides;
  overrides.seed = seed;
  overrides.threads = threads;
  if (run_cmd->parsed()) {
    return fedlab::run_command(config_path, out_dir, overrides);
  }
  return fedlab::compare_command(config_path, out_dir, overrides);
}
