#include "fedlab/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <thread>

namespace fedlab {

namespace {

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  const int workers = std::min<std::size_t>(threads, n);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < n; k += workers) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string mnist_dir(const TaskConfig& task) {
  if (!task.data_dir.empty()) return task.data_dir;
  if (const char* env = std::getenv("FEDLAB_DATA_DIR")) return env;
  throw DataFormatError(
      "mnist task needs [task] data_dir or the FEDLAB_DATA_DIR environment "
      "variable");
}

constexpr std::size_t kEvalChunkRows = 1024;

std::vector<Batch> split_into_chunks(const DenseMatrix& inputs,
                                     const std::vector<int>& labels,
                                     const std::vector<std::size_t>& indices) {
  std::vector<Batch> chunks;
  for (std::size_t begin = 0; begin < indices.size(); begin += kEvalChunkRows) {
    const std::size_t end = std::min(begin + kEvalChunkRows, indices.size());
    chunks.push_back(make_batch(
        inputs, labels,
        std::vector<std::size_t>(indices.begin() + begin, indices.begin() + end)));
  }
  return chunks;
}

}  // namespace

struct FederatedEngine::Snapshot {
  ServerState server;
  std::vector<ClientState> clients;
  ParticipationStats stats;
};

struct FederatedEngine::Impl {
  ExperimentConfig cfg;
  SamplerConfig sampler;
  AlgoParams algo_params;

  // Task material.
  std::vector<ObjectiveSpec> specs;  // one per client (quadratic) or size 1
  ObjectiveSpec spec_nowd;           // eval copy without the weight-decay term
  LabeledDataset train;
  LabeledDataset test;
  Partition partition;
  std::vector<std::size_t> eval_indices;
  // Evaluation batches pre-split into fixed-size chunks so the reduction
  // order (and the emitted metrics) cannot depend on the thread count.
  std::vector<Batch> eval_chunks;  // classification train-eval subset
  std::vector<Batch> test_chunks;  // full test set

  // Federation state.
  ServerState server;
  std::vector<ClientState> clients;
  ParticipationStats stats;

  const ObjectiveSpec& spec_for(int client) const {
    return specs.size() == 1 ? specs[0] : specs[client];
  }

  bool classification() const {
    return cfg.task.kind != TaskKind::SyntheticQuadratic;
  }

  const std::vector<std::size_t>& shard(int client) const {
    static const std::vector<std::size_t> empty;
    if (!classification()) return empty;
    return partition.assignments[client];
  }
};

FederatedEngine::FederatedEngine(const ExperimentConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
  auto& im = *impl_;
  im.cfg = cfg;
  if (cfg.cohort_size < 1 || cfg.cohort_size > cfg.n_clients) {
    throw ConfigError("cohort_size must be in [1, n_clients]");
  }
  if (cfg.total_rounds < 1) throw ConfigError("total_rounds must be >= 1");
  im.sampler = SamplerConfig{cfg.n_clients, cfg.cohort_size,
                             SamplingScheme::UniformWithoutReplacement};
  im.algo_params = cfg.algo;
  im.algo_params.beta = cfg.gate_cfg.beta;
  // In the logistic gate the amplitude already lives inside phi; everywhere
  // else alpha weights the alignment term in the objective.
  im.algo_params.ssg_penalty_alpha =
      cfg.gate_cfg.mode == GateMode::Logistic ? 1.0 : cfg.gate_cfg.alpha;

  auto task_rng = derive_stream(cfg.seed, "task", 0);
  switch (cfg.task.kind) {
    case TaskKind::SyntheticQuadratic: {
      im.specs = synthetic_quadratic_task(cfg.n_clients, cfg.task.dim,
                                          cfg.task.heterogeneity, task_rng,
                                          cfg.task.l_max);
      for (auto& s : im.specs) s.l2_weight_decay = cfg.run.weight_decay;
      break;
    }
    case TaskKind::SyntheticLogistic: {
      LabeledDataset all = synthetic_classification_data(
          cfg.task.samples + cfg.task.test_samples, cfg.task.features,
          cfg.task.classes, task_rng);
      im.train.class_count = all.class_count;
      im.train.inputs = DenseMatrix(cfg.task.samples, all.inputs.cols);
      im.train.labels.assign(all.labels.begin(),
                             all.labels.begin() + cfg.task.samples);
      std::copy(all.inputs.data.begin(),
                all.inputs.data.begin() + im.train.inputs.data.size(),
                im.train.inputs.data.begin());
      im.test.class_count = all.class_count;
      im.test.inputs = DenseMatrix(cfg.task.test_samples, all.inputs.cols);
      im.test.labels.assign(all.labels.begin() + cfg.task.samples,
                            all.labels.end());
      std::copy(all.inputs.data.begin() + im.train.inputs.data.size(),
                all.inputs.data.end(), im.test.inputs.data.begin());
      ObjectiveSpec spec;
      spec.family = ObjectiveFamily::Logistic;
      spec.layer_sizes = {cfg.task.features, cfg.task.classes};
      spec.l2_weight_decay = cfg.run.weight_decay;
      im.specs = {spec};
      break;
    }
    case TaskKind::Mnist: {
      const std::string dir = mnist_dir(cfg.task);
      im.train = load_idx(dir + "/train-images-idx3-ubyte",
                          dir + "/train-labels-idx1-ubyte");
      im.test = load_idx(dir + "/t10k-images-idx3-ubyte",
                         dir + "/t10k-labels-idx1-ubyte");
      ObjectiveSpec spec;
      spec.family = ObjectiveFamily::Mlp;
      spec.layer_sizes.push_back(static_cast<int>(im.train.inputs.cols));
      for (int hbits : cfg.task.hidden) spec.layer_sizes.push_back(hbits);
      spec.layer_sizes.push_back(im.train.class_count);
      spec.l2_weight_decay = cfg.run.weight_decay;
      im.specs = {spec};
      break;
    }
  }

  if (im.classification()) {
    auto part_rng = derive_stream(cfg.seed, "partition", 0);
    im.partition =
        cfg.partition.kind == PartitionKind::Dirichlet
            ? dirichlet_partition(im.train.labels, cfg.n_clients,
                                  cfg.partition.concentration, part_rng)
            : stratified_iid_partition(im.train.labels, cfg.n_clients, part_rng);

    // Fixed train-loss evaluation subset.
    const std::size_t n = im.train.size();
    const std::size_t want =
        std::min<std::size_t>(std::max(cfg.eval_subset, 1), n);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    auto eval_rng = derive_stream(cfg.seed, "eval", 0);
    for (std::size_t k = 0; k < want; ++k) {
      const std::size_t j = k + eval_rng.next_below(n - k);
      std::swap(ids[k], ids[j]);
    }
    ids.resize(want);
    std::sort(ids.begin(), ids.end());
    im.eval_indices = std::move(ids);
    im.eval_chunks =
        split_into_chunks(im.train.inputs, im.train.labels, im.eval_indices);

    std::vector<std::size_t> all_test(im.test.size());
    std::iota(all_test.begin(), all_test.end(), std::size_t{0});
    im.test_chunks = split_into_chunks(im.test.inputs, im.test.labels, all_test);

    im.spec_nowd = im.specs[0];
    im.spec_nowd.l2_weight_decay = 0.0;
  }

  auto init_rng = derive_stream(cfg.seed, "init", 0);
  ParamVector omega0 = init_params(im.spec_for(0), init_rng);
  im.server = make_server_state(std::move(omega0), cfg.n_clients, cfg.algorithm);
  const std::size_t dim = im.spec_for(0).dimension();
  im.clients.reserve(cfg.n_clients);
  for (int i = 0; i < cfg.n_clients; ++i) {
    im.clients.push_back(make_client_state(dim, cfg.algorithm));
  }
  // Algorithm 1 normalizes by the whole-run expectation.
  const ExpectationHorizon horizon = cfg.gate_cfg.mode == GateMode::Algorithm1
                                         ? ExpectationHorizon::TotalRounds
                                         : cfg.horizon;
  im.stats = make_stats(im.sampler, cfg.total_rounds, cfg.epsilon, horizon);
}

FederatedEngine::~FederatedEngine() = default;

std::vector<int> FederatedEngine::step(RngStream* cohort_rng) {
  auto& im = *impl_;
  const auto& cfg = im.cfg;
  const int t = im.server.round + 1;  // 1-based round
  const double eta =
      cfg.run.lr * std::pow(cfg.run.lr_decay_per_round, t - 1);

  RngStream default_rng = derive_stream(cfg.seed, "cohort", t);
  RngStream& rng = cohort_rng ? *cohort_rng : default_rng;
  const std::vector<int> cohort = sample_cohort(im.sampler, t, rng);
  record_participation(im.stats, cohort);

  std::vector<double> gates(cohort.size());
  for (std::size_t j = 0; j < cohort.size(); ++j) {
    gates[j] = gate(cfg.gate_cfg, ratio(im.stats, im.sampler, cohort[j]));
  }

  std::vector<Contribution> contributions(cohort.size());
  const bool carries_memory = cfg.algorithm == Algorithm::FedSsg ||
                              cfg.algorithm == Algorithm::FedDc;
  parallel_for(cohort.size(), cfg.threads, [&](std::size_t j) {
    const int i = cohort[j];
    auto local_rng = derive_stream(
        cfg.seed, "local",
        static_cast<std::uint64_t>(t - 1) * cfg.n_clients + i);
    auto res = local_update(cfg.algorithm, im.algo_params, im.spec_for(i),
                            im.clients[i], im.server,
                            im.classification() ? &im.train : nullptr,
                            im.shard(i), cfg.run, eta, gates[j], local_rng, t, i);
    Contribution c;
    c.client = i;
    c.theta = std::move(res.theta);
    c.dtheta = std::move(res.dtheta);
    c.scaffold_dc = std::move(res.scaffold_dc);
    if (carries_memory) c.h = im.clients[i].h;
    contributions[j] = std::move(c);
  });

  aggregate(cfg.algorithm, im.algo_params, im.server, contributions);
  return cohort;
}

RoundRecord FederatedEngine::evaluate(const std::vector<int>& participated) const {
  auto& im = *impl_;
  RoundRecord rec;
  rec.round = im.server.round;
  rec.participated = participated;
  if (!im.classification()) {
    rec.train_loss = exact_global_loss();
    rec.grad_norm_sq = norm_sq(exact_global_grad());
    rec.test_accuracy = 0.0;
    return rec;
  }
  if (im.cfg.task.kind == TaskKind::SyntheticLogistic) {
    rec.train_loss = exact_global_loss();
    rec.grad_norm_sq = norm_sq(exact_global_grad());
  } else {
    // Chunked loss/gradient on the fixed eval subset; partial results are
    // combined in chunk order so the output is thread-count independent.
    const std::size_t n_chunks = im.eval_chunks.size();
    std::vector<double> losses(n_chunks);
    std::vector<ParamVector> grads(n_chunks);
    parallel_for(n_chunks, im.cfg.threads, [&](std::size_t k) {
      auto [loss, grad] =
          loss_and_grad(im.spec_nowd, im.server.omega, im.eval_chunks[k]);
      losses[k] = loss;
      grads[k] = std::move(grad);
    });
    double total = 0.0;
    ParamVector grad(im.server.omega.size(), 0.0);
    std::size_t rows = 0;
    for (std::size_t k = 0; k < n_chunks; ++k) {
      const auto n_k = im.eval_chunks[k].labels.size();
      total += losses[k] * static_cast<double>(n_k);
      axpy_inplace(static_cast<double>(n_k), grads[k], grad);
      rows += n_k;
    }
    total /= static_cast<double>(rows);
    scale_inplace(grad, 1.0 / static_cast<double>(rows));
    const double wd = im.spec_for(0).l2_weight_decay;
    if (wd != 0.0) {
      total += 0.5 * wd * norm_sq(im.server.omega);
      axpy_inplace(wd, im.server.omega, grad);
    }
    rec.train_loss = total;
    rec.grad_norm_sq = norm_sq(grad);
  }
  {
    const std::size_t n_chunks = im.test_chunks.size();
    std::vector<double> hits(n_chunks);
    parallel_for(n_chunks, im.cfg.threads, [&](std::size_t k) {
      hits[k] = accuracy(im.spec_nowd, im.server.omega, im.test_chunks[k]) *
                static_cast<double>(im.test_chunks[k].labels.size());
    });
    double total_hits = 0.0;
    for (double h : hits) total_hits += h;
    rec.test_accuracy = total_hits / static_cast<double>(im.test.size());
  }
  return rec;
}

int FederatedEngine::rounds_done() const { return impl_->server.round; }
const ServerState& FederatedEngine::server() const { return impl_->server; }
const ExperimentConfig& FederatedEngine::config() const { return impl_->cfg; }
int FederatedEngine::client_count() const { return impl_->cfg.n_clients; }

double FederatedEngine::exact_global_loss() const {
  auto& im = *impl_;
  if (im.cfg.task.kind == TaskKind::Mnist) {
    throw UnsupportedError("exact global loss needs a synthetic task");
  }
  double total = 0.0;
  for (int i = 0; i < im.cfg.n_clients; ++i) {
    if (im.classification()) {
      Batch b = make_batch(im.train.inputs, im.train.labels, im.shard(i));
      total += loss_value(im.spec_for(i), im.server.omega, b);
    } else {
      total += loss_value(im.spec_for(i), im.server.omega, Batch{});
    }
  }
  return total / im.cfg.n_clients;
}

ParamVector FederatedEngine::exact_global_grad() const {
  auto& im = *impl_;
  if (im.cfg.task.kind == TaskKind::Mnist) {
    throw UnsupportedError("exact global gradient needs a synthetic task");
  }
  ParamVector mean(im.spec_for(0).dimension(), 0.0);
  for (int i = 0; i < im.cfg.n_clients; ++i) {
    Batch b;
    if (im.classification()) {
      b = make_batch(im.train.inputs, im.train.labels, im.shard(i));
    }
    axpy_inplace(1.0, loss_and_grad(im.spec_for(i), im.server.omega, b).second,
                 mean);
  }
  scale_inplace(mean, 1.0 / im.cfg.n_clients);
  return mean;
}

double FederatedEngine::quadratic_optimum_value() const {
  auto& im = *impl_;
  if (im.cfg.task.kind != TaskKind::SyntheticQuadratic) {
    throw UnsupportedError("closed-form optimum exists for quadratic tasks only");
  }
  const ParamVector opt = quadratic_global_minimizer(im.specs);
  double total = 0.0;
  for (const auto& spec : im.specs) total += loss_value(spec, opt, Batch{});
  return total / im.cfg.n_clients;
}

DissimilarityEstimate FederatedEngine::estimate_dissimilarity(
    const std::vector<int>& clients, double eps_div) const {
  auto& im = *impl_;
  if (clients.empty()) throw ConfigError("dissimilarity needs >= 1 client");
  double mean_norm_sq = 0.0;
  ParamVector mean_grad(im.spec_for(0).dimension(), 0.0);
  for (int i : clients) {
    Batch b;
    if (im.classification()) {
      b = make_batch(im.train.inputs, im.train.labels, im.shard(i));
    }
    ParamVector g = loss_and_grad(im.spec_for(i), im.server.omega, b).second;
    mean_norm_sq += norm_sq(g);
    axpy_inplace(1.0, g, mean_grad);
  }
  mean_norm_sq /= clients.size();
  scale_inplace(mean_grad, 1.0 / clients.size());
  const double global_sq = norm_sq(mean_grad);
  if (global_sq <= eps_div) {
    throw DegeneratePointError(
        "global gradient norm below threshold; B(w) undefined here");
  }
  DissimilarityEstimate est;
  est.b_value = std::sqrt(mean_norm_sq / global_sq);
  est.at_round = im.server.round;
  return est;
}

std::unique_ptr<FederatedEngine::Snapshot> FederatedEngine::snapshot() const {
  auto snap = std::make_unique<Snapshot>();
  snap->server = impl_->server;
  snap->clients = impl_->clients;
  snap->stats = impl_->stats;
  return snap;
}

void FederatedEngine::restore(const Snapshot& snap) {
  impl_->server = snap.server;
  impl_->clients = snap.clients;
  impl_->stats = snap.stats;
}

bool FederatedEngine::evaluation_isolated() const {
  // Train and test are distinct datasets; shard indices must stay within the
  // training set.
  auto& im = *impl_;
  if (!im.classification()) return true;
  for (const auto& shard : im.partition.assignments) {
    for (std::size_t idx : shard) {
      if (idx >= im.train.size()) return false;
    }
  }
  return true;
}

std::size_t FederatedEngine::client_state_floats(int client) const {
  const auto& c = impl_->clients.at(client);
  return c.h.size() + c.dtheta_prev.size() + c.scaffold_c.size() +
         c.feddyn_grad.size();
}

std::vector<RoundRecord> run(const ExperimentConfig& cfg) {
  return run_experiment(cfg).records;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  FederatedEngine engine(cfg);
  RunResult result;
  const auto run_start = std::chrono::steady_clock::now();
  for (int t = 1; t <= cfg.total_rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto cohort = engine.step();
    if (t % std::max(cfg.eval_every, 1) == 0 || t == cfg.total_rounds) {
      RoundRecord rec = engine.evaluate(cohort);
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      result.records.push_back(std::move(rec));
    }
  }
  result.wall_ms_total = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - run_start)
                             .count();
  // Final heterogeneity estimate over a bounded client sample.
  try {
    std::vector<int> sample;
    if (cfg.n_clients <= 64) {
      sample.resize(cfg.n_clients);
      std::iota(sample.begin(), sample.end(), 0);
    } else {
      auto rng = derive_stream(cfg.seed, "bsample", 0);
      sample = sample_cohort(SamplerConfig{cfg.n_clients, 64,
                                           SamplingScheme::UniformWithoutReplacement},
                             0, rng);
    }
    result.b_final = engine.estimate_dissimilarity(sample);
  } catch (const DegeneratePointError&) {
    result.b_final = std::nullopt;
  } catch (const UnsupportedError&) {
    result.b_final = std::nullopt;
  }
  return result;
}

std::optional<int> rounds_to_target(const std::vector<RoundRecord>& records,
                                    double target_acc) {
  if (records.empty()) throw ConfigError("rounds_to_target: no records");
  for (const auto& r : records) {
    if (r.test_accuracy >= target_acc) return r.round;
  }
  return std::nullopt;
}

double speedup(std::optional<int> baseline_rounds,
               std::optional<int> method_rounds, int total_rounds) {
  if (total_rounds < 1) throw ConfigError("speedup: T must be >= 1");
  const double base = static_cast<double>(baseline_rounds.value_or(total_rounds));
  const double method = static_cast<double>(method_rounds.value_or(total_rounds));
  return base / method;
}

DescentReport descent_check(const ExperimentConfig& cfg, int resample_count,
                            int p_hat_every) {
  if (cfg.task.kind == TaskKind::Mnist) {
    throw UnsupportedError("descent_check needs a synthetic task (exact f)");
  }
  if (resample_count < 1) throw ConfigError("resample_count must be >= 1");
  FederatedEngine engine(cfg);

  std::vector<double> f_series;    // f(omega^t), t = 0..T
  std::vector<double> grad_series; // ||grad f(omega^t)||^2, t = 0..T
  f_series.push_back(engine.exact_global_loss());
  grad_series.push_back(norm_sq(engine.exact_global_grad()));

  DescentReport report;
  for (int t = 1; t <= cfg.total_rounds; ++t) {
    if (p_hat_every > 0 && t % p_hat_every == 0) {
      const double f_before = f_series.back();
      const double g_before = grad_series.back();
      if (g_before > 1e-18) {
        auto snap = engine.snapshot();
        double f_mean = 0.0;
        for (int k = 0; k < resample_count; ++k) {
          auto rng = derive_stream(cfg.seed, "resample",
                                   static_cast<std::uint64_t>(t) * 4096 + k);
          engine.step(&rng);
          f_mean += engine.exact_global_loss();
          engine.restore(*snap);
        }
        f_mean /= resample_count;
        report.p_hat.push_back(2.0 * (f_before - f_mean) / g_before);
      }
    }
    engine.step();
    f_series.push_back(engine.exact_global_loss());
    grad_series.push_back(norm_sq(engine.exact_global_grad()));
  }

  // Window-10 moving average non-increase fraction.
  const int window = 10;
  auto moving_avg = [&](int t) {
    const int lo = std::max(0, t - window + 1);
    double acc = 0.0;
    for (int k = lo; k <= t; ++k) acc += f_series[k];
    return acc / (t - lo + 1);
  };
  int non_increasing = 0;
  const int total = static_cast<int>(f_series.size()) - 1;
  for (int t = 1; t <= total; ++t) {
    const double prev = moving_avg(t - 1);
    const double cur = moving_avg(t);
    if (cur <= prev + 1e-12 * std::max(1.0, std::abs(prev))) ++non_increasing;
  }
  report.decrease_fraction = static_cast<double>(non_increasing) / total;

  // Least-squares slope of log(min-so-far grad) against log t.
  double min_so_far = grad_series[1];
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n_pts = 0;
  for (int t = 1; t <= total; ++t) {
    min_so_far = std::min(min_so_far, grad_series[t]);
    const double x = std::log(static_cast<double>(t));
    const double y = std::log(std::max(min_so_far, 1e-300));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++n_pts;
  }
  report.loglog_slope =
      (n_pts * sxy - sx * sy) / std::max(n_pts * sxx - sx * sx, 1e-300);

  for (int t = 1; t <= total; ++t) report.sum_grad_norm_sq += grad_series[t];
  report.f_initial = f_series.front();
  report.f_final = f_series.back();
  report.final_grad_norm_sq = grad_series.back();
  report.f_star = cfg.task.kind == TaskKind::SyntheticQuadratic
                      ? engine.quadratic_optimum_value()
                      : *std::min_element(f_series.begin(), f_series.end());
  report.bound_constant =
      report.sum_grad_norm_sq /
      std::max(report.f_initial - report.f_star, 1e-300);
  return report;
}

}  // namespace fedlab
