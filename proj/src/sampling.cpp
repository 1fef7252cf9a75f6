#include "fedlab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedlab {

ParticipationStats make_stats(const SamplerConfig& cfg, int total_rounds,
                              double epsilon, ExpectationHorizon horizon) {
  if (cfg.cohort_size < 1 || cfg.cohort_size > cfg.n_clients) {
    throw ConfigError("cohort_size must be in [1, n_clients]");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  ParticipationStats stats;
  stats.counts.assign(cfg.n_clients, 0);
  stats.round = 0;
  stats.total_rounds = total_rounds;
  stats.epsilon = epsilon;
  stats.horizon = horizon;
  return stats;
}

std::vector<int> sample_cohort(const SamplerConfig& cfg, int /*round*/,
                               RngStream& rng) {
  const int n = cfg.n_clients;
  const int m = cfg.cohort_size;
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first m slots end up a uniform sample.
  for (int k = 0; k < m; ++k) {
    const std::size_t j = k + rng.next_below(static_cast<std::uint64_t>(n - k));
    std::swap(ids[k], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double expected_count(const ParticipationStats& stats, const SamplerConfig& cfg,
                      int client) {
  if (client < 0 || client >= cfg.n_clients) {
    throw ConfigError("client id out of range");
  }
  const double p = static_cast<double>(cfg.cohort_size) /
                   static_cast<double>(cfg.n_clients);
  const int horizon_rounds = stats.horizon == ExpectationHorizon::CurrentRound
                                 ? stats.round
                                 : stats.total_rounds;
  return p * static_cast<double>(horizon_rounds);
}

double ratio(const ParticipationStats& stats, const SamplerConfig& cfg,
             int client) {
  const double mu = expected_count(stats, cfg, client);
  return static_cast<double>(stats.counts[client]) / (mu + stats.epsilon);
}

double gate(const GateConfig& cfg, double r) {
  if (r < 0.0) throw NumericError("participation ratio must be nonnegative");
  switch (cfg.mode) {
    case GateMode::Identity:
      return r;
    case GateMode::IdentityClipped:
      return std::min(r, 1.0);
    case GateMode::Logistic:
      return cfg.alpha /
             (1.0 + std::exp(-(r - cfg.logistic_center) / cfg.logistic_scale));
    case GateMode::Algorithm1:
      return r;  // xi_i; the caller computes r with the total-rounds horizon
    case GateMode::Zero:
      return 0.0;
  }
  throw ConfigError("unknown gate mode");
}

void record_participation(ParticipationStats& stats,
                          const std::vector<int>& cohort) {
  for (int i : cohort) {
    if (i < 0 || static_cast<std::size_t>(i) >= stats.counts.size()) {
      throw ConfigError("cohort member out of range");
    }
    ++stats.counts[i];
  }
  ++stats.round;
}

}  // namespace fedlab
