#include "fedlab/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fedlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Section = std::map<std::string, std::string>;
using IniData = std::map<std::string, Section>;

IniData parse_ini(const std::string& text) {
  IniData data;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty section");
      }
      data[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": key outside any section");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (!data[section].emplace(key, value).second) {
      throw ConfigError("duplicate key '" + key + "' in section [" + section +
                        "]");
    }
  }
  return data;
}

// Typed access with unknown-key detection per section.
class SectionReader {
 public:
  SectionReader(const IniData& data, std::string name) : name_(std::move(name)) {
    if (auto it = data.find(name_); it != data.end()) section_ = &it->second;
  }

  bool has(const std::string& key) {
    if (!section_) return false;
    return section_->count(key) > 0;
  }

  std::string raw(const std::string& key) {
    touched_.insert(key);
    const auto it = section_->find(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& dflt) {
    return has(key) ? raw(key) : dflt;
  }

  std::string require_string(const std::string& key) {
    if (!has(key)) {
      throw ConfigError("missing key '" + key + "' in section [" + name_ + "]");
    }
    return raw(key);
  }

  long long get_int(const std::string& key, long long dflt) {
    return has(key) ? to_int(key, raw(key)) : dflt;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) {
    if (!has(key)) return dflt;
    const std::string v = raw(key);
    try {
      std::size_t pos = 0;
      const std::uint64_t parsed = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return parsed;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected unsigned integer, got '" +
                        v + "'");
    }
  }

  double get_double(const std::string& key, double dflt) {
    if (!has(key)) return dflt;
    return to_double(key, raw(key));
  }

  bool get_bool(const std::string& key, bool dflt) {
    if (!has(key)) return dflt;
    const std::string v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v +
                      "'");
  }

  std::vector<std::string> get_list(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::istringstream in(raw(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  void finish() {
    if (!section_) return;
    for (const auto& [key, value] : *section_) {
      if (!touched_.count(key)) {
        throw ConfigError("unknown key '" + key + "' in section [" + name_ +
                          "]");
      }
    }
  }

  long long to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const long long parsed = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return parsed;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
  }

  double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double parsed = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return parsed;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
  }

 private:
  std::string name_;
  const Section* section_ = nullptr;
  std::set<std::string> touched_;
};

const std::map<std::string, TaskKind> kTaskNames = {
    {"mnist", TaskKind::Mnist},
    {"synthetic_quadratic", TaskKind::SyntheticQuadratic},
    {"synthetic_logistic", TaskKind::SyntheticLogistic}};

const std::map<std::string, PartitionKind> kPartitionNames = {
    {"iid", PartitionKind::Iid}, {"dirichlet", PartitionKind::Dirichlet}};

const std::map<std::string, ExpectationHorizon> kHorizonNames = {
    {"current_round", ExpectationHorizon::CurrentRound},
    {"total_rounds", ExpectationHorizon::TotalRounds}};

const std::map<std::string, GateMode> kGateNames = {
    {"identity", GateMode::Identity},
    {"identity_clipped", GateMode::IdentityClipped},
    {"logistic", GateMode::Logistic},
    {"algorithm1", GateMode::Algorithm1},
    {"zero", GateMode::Zero}};

const std::map<std::string, Algorithm> kAlgorithmNames = {
    {"fedavg", Algorithm::FedAvg},   {"fedprox", Algorithm::FedProx},
    {"scaffold", Algorithm::Scaffold}, {"feddyn", Algorithm::FedDyn},
    {"feddc", Algorithm::FedDc},     {"fedssg", Algorithm::FedSsg}};

const std::map<std::string, AlignmentForm> kAlignmentNames = {
    {"inner_product", AlignmentForm::InnerProduct},
    {"proximal", AlignmentForm::Proximal}};

template <typename T>
T enum_from(const std::map<std::string, T>& names, const std::string& key,
            const std::string& value) {
  const auto it = names.find(value);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [name, unused] : names) {
      if (!allowed.empty()) allowed += ", ";
      allowed += name;
    }
    throw ConfigError("key '" + key + "': unknown value '" + value +
                      "' (allowed: " + allowed + ")");
  }
  return it->second;
}

template <typename T>
std::string enum_name(const std::map<std::string, T>& names, T value) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  throw ConfigError("unnamed enum value");
}

ExperimentConfig read_experiment(const IniData& data) {
  ExperimentConfig cfg;

  SectionReader task(data, "task");
  cfg.task.kind = enum_from(kTaskNames, "kind", task.require_string("kind"));
  cfg.task.data_dir = task.get_string("data_dir", "");
  if (task.has("hidden")) {
    cfg.task.hidden.clear();
    for (const auto& item : task.get_list("hidden")) {
      cfg.task.hidden.push_back(static_cast<int>(task.to_int("hidden", item)));
    }
  }
  cfg.task.dim = static_cast<int>(task.get_int("dim", cfg.task.dim));
  cfg.task.heterogeneity = task.get_double("heterogeneity", cfg.task.heterogeneity);
  cfg.task.l_max = task.get_double("l_max", cfg.task.l_max);
  cfg.task.features = static_cast<int>(task.get_int("features", cfg.task.features));
  cfg.task.classes = static_cast<int>(task.get_int("classes", cfg.task.classes));
  cfg.task.samples = static_cast<int>(task.get_int("samples", cfg.task.samples));
  cfg.task.test_samples =
      static_cast<int>(task.get_int("test_samples", cfg.task.test_samples));
  cfg.partition.kind = enum_from(kPartitionNames, "partition",
                                 task.get_string("partition", "iid"));
  cfg.partition.concentration =
      task.get_double("concentration", cfg.partition.concentration);
  task.finish();

  SectionReader sampler(data, "sampler");
  cfg.n_clients = static_cast<int>(sampler.get_int("n_clients", 0));
  cfg.cohort_size = static_cast<int>(sampler.get_int("cohort_size", 0));
  cfg.total_rounds = static_cast<int>(sampler.get_int("total_rounds", 0));
  cfg.epsilon = sampler.get_double("epsilon", 1e-6);
  cfg.horizon = enum_from(kHorizonNames, "expectation_horizon",
                          sampler.get_string("expectation_horizon",
                                             "current_round"));
  sampler.finish();

  SectionReader gate(data, "gate");
  cfg.gate_cfg.mode =
      enum_from(kGateNames, "mode", gate.get_string("mode", "identity"));
  cfg.gate_cfg.alpha = gate.get_double("alpha", 0.05);
  cfg.gate_cfg.beta = gate.get_double("beta", 0.0);
  cfg.gate_cfg.logistic_center = gate.get_double("logistic_center", 1.0);
  cfg.gate_cfg.logistic_scale = gate.get_double("logistic_scale", 0.25);
  gate.finish();

  SectionReader algo(data, "algorithm");
  cfg.algorithm = enum_from(kAlgorithmNames, "name",
                            algo.get_string("name", "fedavg"));
  cfg.algo.fedprox_mu = algo.get_double("fedprox_mu", 1e-4);
  cfg.algo.feddyn_alpha = algo.get_double("feddyn_alpha", 0.01);
  cfg.algo.feddc_alpha = algo.get_double("feddc_alpha", 0.1);
  cfg.algo.ssg_alignment = enum_from(kAlignmentNames, "alignment",
                                     algo.get_string("alignment",
                                                     "inner_product"));
  cfg.algo.ablation.penalization = !algo.get_bool("disable_penalization", false);
  cfg.algo.ablation.grad_correction =
      !algo.get_bool("disable_grad_correction", false);
  cfg.algo.ablation.memo_xi = !algo.get_bool("disable_memo_xi", false);
  cfg.algo.g_norm_per_step = algo.get_bool("g_norm_per_step", true);
  cfg.algo.literal_1_over_n = algo.get_bool("literal_1_over_n", false);
  algo.finish();

  SectionReader run(data, "run");
  cfg.run.epochs = static_cast<int>(run.get_int("epochs", 5));
  cfg.run.batch_size = static_cast<int>(run.get_int("batch_size", 50));
  cfg.run.lr = run.get_double("lr", 0.1);
  cfg.run.lr_decay_per_round = run.get_double("lr_decay_per_round", 0.998);
  cfg.run.weight_decay = run.get_double("weight_decay", 0.001);
  cfg.seed = run.get_u64("seed", 1);
  cfg.eval_every = static_cast<int>(run.get_int("eval_every", 1));
  cfg.threads = static_cast<int>(run.get_int("threads", 1));
  cfg.eval_subset = static_cast<int>(run.get_int("eval_subset", 2048));
  if (run.has("target_accuracy")) {
    cfg.target_accuracy = run.get_double("target_accuracy", 0.0);
  }
  run.finish();

  // Invariant checks, each naming the offending key.
  if (cfg.n_clients < 1) throw ConfigError("n_clients: must be >= 1");
  if (cfg.cohort_size < 1 || cfg.cohort_size > cfg.n_clients) {
    throw ConfigError("cohort_size: must be in [1, n_clients]");
  }
  if (cfg.total_rounds < 1) throw ConfigError("total_rounds: must be >= 1");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon: must be > 0");
  if (!(cfg.gate_cfg.alpha > 0.0)) throw ConfigError("alpha: must be > 0");
  if (cfg.gate_cfg.beta < 0.0) throw ConfigError("beta: must be >= 0");
  if (cfg.run.epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (cfg.run.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(cfg.run.lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (!(cfg.run.lr_decay_per_round > 0.0) || cfg.run.lr_decay_per_round > 1.0) {
    throw ConfigError("lr_decay_per_round: must be in (0, 1]");
  }
  if (cfg.run.weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (cfg.eval_every < 1) throw ConfigError("eval_every: must be >= 1");
  if (cfg.threads < 1) throw ConfigError("threads: must be >= 1");
  if (cfg.eval_subset < 1) throw ConfigError("eval_subset: must be >= 1");
  if (cfg.partition.kind == PartitionKind::Dirichlet &&
      !(cfg.partition.concentration > 0.0)) {
    throw ConfigError("concentration: must be > 0");
  }
  if (cfg.target_accuracy &&
      !(*cfg.target_accuracy > 0.0 && *cfg.target_accuracy < 1.0)) {
    throw ConfigError("target_accuracy: must be in (0, 1)");
  }
  return cfg;
}

}  // namespace

std::string algorithm_name(Algorithm algo) {
  return enum_name(kAlgorithmNames, algo);
}

Algorithm algorithm_from_name(const std::string& name) {
  return enum_from(kAlgorithmNames, "algorithms", name);
}

ParsedConfig parse_config_text(const std::string& text) {
  const IniData data = parse_ini(text);
  for (const auto& [section, unused] : data) {
    if (section != "task" && section != "sampler" && section != "gate" &&
        section != "algorithm" && section != "run" && section != "compare") {
      throw ConfigError("unknown section [" + section + "]");
    }
  }
  ExperimentConfig base = read_experiment(data);
  if (!data.count("compare")) return base;

  SectionReader compare(data, "compare");
  ComparisonSpec spec;
  spec.base = base;
  for (const auto& name : compare.get_list("algorithms")) {
    spec.algorithms.push_back(algorithm_from_name(name));
  }
  spec.target_accuracy = compare.get_double("target_accuracy", 0.97);
  for (const auto& s : compare.get_list("seeds")) {
    try {
      std::size_t pos = 0;
      spec.seeds.push_back(std::stoull(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("seeds: expected unsigned integer, got '" + s + "'");
    }
  }
  compare.finish();
  if (spec.algorithms.empty()) {
    throw ConfigError("algorithms: comparison needs at least one algorithm");
  }
  if (spec.seeds.empty()) spec.seeds = {base.seed};
  if (!(spec.target_accuracy > 0.0 && spec.target_accuracy < 1.0)) {
    throw ConfigError("target_accuracy: must be in (0, 1)");
  }
  return spec;
}

ParsedConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[task]\n";
  out << "kind = " << enum_name(kTaskNames, cfg.task.kind) << "\n";
  if (!cfg.task.data_dir.empty()) out << "data_dir = " << cfg.task.data_dir << "\n";
  out << "hidden = ";
  for (std::size_t k = 0; k < cfg.task.hidden.size(); ++k) {
    if (k) out << ", ";
    out << cfg.task.hidden[k];
  }
  out << "\n";
  out << "dim = " << cfg.task.dim << "\n";
  out << "heterogeneity = " << fmt_double(cfg.task.heterogeneity) << "\n";
  out << "l_max = " << fmt_double(cfg.task.l_max) << "\n";
  out << "features = " << cfg.task.features << "\n";
  out << "classes = " << cfg.task.classes << "\n";
  out << "samples = " << cfg.task.samples << "\n";
  out << "test_samples = " << cfg.task.test_samples << "\n";
  out << "partition = " << enum_name(kPartitionNames, cfg.partition.kind) << "\n";
  out << "concentration = " << fmt_double(cfg.partition.concentration) << "\n";

  out << "\n[sampler]\n";
  out << "n_clients = " << cfg.n_clients << "\n";
  out << "cohort_size = " << cfg.cohort_size << "\n";
  out << "total_rounds = " << cfg.total_rounds << "\n";
  out << "epsilon = " << fmt_double(cfg.epsilon) << "\n";
  out << "expectation_horizon = " << enum_name(kHorizonNames, cfg.horizon) << "\n";

  out << "\n[gate]\n";
  out << "mode = " << enum_name(kGateNames, cfg.gate_cfg.mode) << "\n";
  out << "alpha = " << fmt_double(cfg.gate_cfg.alpha) << "\n";
  out << "beta = " << fmt_double(cfg.gate_cfg.beta) << "\n";
  out << "logistic_center = " << fmt_double(cfg.gate_cfg.logistic_center) << "\n";
  out << "logistic_scale = " << fmt_double(cfg.gate_cfg.logistic_scale) << "\n";

  out << "\n[algorithm]\n";
  out << "name = " << algorithm_name(cfg.algorithm) << "\n";
  out << "fedprox_mu = " << fmt_double(cfg.algo.fedprox_mu) << "\n";
  out << "feddyn_alpha = " << fmt_double(cfg.algo.feddyn_alpha) << "\n";
  out << "feddc_alpha = " << fmt_double(cfg.algo.feddc_alpha) << "\n";
  out << "alignment = " << enum_name(kAlignmentNames, cfg.algo.ssg_alignment)
      << "\n";
  out << "disable_penalization = "
      << (cfg.algo.ablation.penalization ? "false" : "true") << "\n";
  out << "disable_grad_correction = "
      << (cfg.algo.ablation.grad_correction ? "false" : "true") << "\n";
  out << "disable_memo_xi = " << (cfg.algo.ablation.memo_xi ? "false" : "true")
      << "\n";
  out << "g_norm_per_step = " << (cfg.algo.g_norm_per_step ? "true" : "false")
      << "\n";
  out << "literal_1_over_n = " << (cfg.algo.literal_1_over_n ? "true" : "false")
      << "\n";

  out << "\n[run]\n";
  out << "epochs = " << cfg.run.epochs << "\n";
  out << "batch_size = " << cfg.run.batch_size << "\n";
  out << "lr = " << fmt_double(cfg.run.lr) << "\n";
  out << "lr_decay_per_round = " << fmt_double(cfg.run.lr_decay_per_round)
      << "\n";
  out << "weight_decay = " << fmt_double(cfg.run.weight_decay) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "eval_every = " << cfg.eval_every << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "eval_subset = " << cfg.eval_subset << "\n";
  if (cfg.target_accuracy) {
    out << "target_accuracy = " << fmt_double(*cfg.target_accuracy) << "\n";
  }
  return out.str();
}

std::string serialize_comparison(const ComparisonSpec& spec) {
  std::ostringstream out;
  out << serialize_config(spec.base);
  out << "\n[compare]\n";
  out << "algorithms = ";
  for (std::size_t k = 0; k < spec.algorithms.size(); ++k) {
    if (k) out << ", ";
    out << algorithm_name(spec.algorithms[k]);
  }
  out << "\n";
  out << "target_accuracy = " << fmt_double(spec.target_accuracy) << "\n";
  out << "seeds = ";
  for (std::size_t k = 0; k < spec.seeds.size(); ++k) {
    if (k) out << ", ";
    out << spec.seeds[k];
  }
  out << "\n";
  return out.str();
}

std::string config_hash_hex(const std::string& canonical_text) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text)));
  return buf;
}

}  // namespace fedlab
