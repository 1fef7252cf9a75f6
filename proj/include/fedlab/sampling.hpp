#pragma once

#include <vector>

#include "fedlab/numkit.hpp"

namespace fedlab {

enum class SamplingScheme { UniformWithoutReplacement };

// Which horizon the expected selection count is taken over. The main-text
// ratio uses the rounds elapsed so far (mu = (m/N) t); the appendix algorithm
// normalizes by the full run (T m / N).
enum class ExpectationHorizon { CurrentRound, TotalRounds };

enum class GateMode {
  Identity,         // phi(r) = r
  IdentityClipped,  // phi(r) = min(r, 1)
  Logistic,         // phi(r) = alpha * sigmoid((r - center) / scale)
  Algorithm1,       // phi(r) = r with the total-rounds horizon (xi_i)
  Zero,             // phi(r) = 0; diagnostic mode for reduction checks
};

struct SamplerConfig {
  int n_clients = 1;    // N
  int cohort_size = 1;  // m = |S_t|
  SamplingScheme scheme = SamplingScheme::UniformWithoutReplacement;
};

struct ParticipationStats {
  std::vector<int> counts;  // c_i over rounds seen so far
  int round = 0;            // t
  int total_rounds = 1;     // T
  double epsilon = 1e-6;
  ExpectationHorizon horizon = ExpectationHorizon::CurrentRound;
};

struct GateConfig {
  GateMode mode = GateMode::Identity;
  double alpha = 0.05;  // alignment strength; caps the logistic gate
  double beta = 0.0;    // additive offset in the memory update
  double logistic_center = 1.0;
  double logistic_scale = 0.25;

  bool operator==(const GateConfig&) const = default;
};

ParticipationStats make_stats(const SamplerConfig& cfg, int total_rounds,
                              double epsilon, ExpectationHorizon horizon);

// m distinct ids, uniform without replacement, ascending order.
std::vector<int> sample_cohort(const SamplerConfig& cfg, int round,
                               RngStream& rng);

// Expected selections of one client: (m/N) * t or (m/N) * T by horizon.
double expected_count(const ParticipationStats& stats, const SamplerConfig& cfg,
                      int client);

// Observed/expected ratio r = c / (mu + eps).
double ratio(const ParticipationStats& stats, const SamplerConfig& cfg,
             int client);

// Monotone nondecreasing gate value for a given ratio.
double gate(const GateConfig& cfg, double r);

void record_participation(ParticipationStats& stats,
                          const std::vector<int>& cohort);

}  // namespace fedlab
