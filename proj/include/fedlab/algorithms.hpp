#pragma once

#include <optional>
#include <vector>

#include "fedlab/datasets.hpp"
#include "fedlab/models.hpp"
#include "fedlab/numkit.hpp"

namespace fedlab {

enum class Algorithm { FedAvg, FedProx, Scaffold, FedDyn, FedDc, FedSsg };

// Component toggles for the FedSSG objective decomposition. Disabling memo_xi
// replaces the gate by a constant 1 in the memory update; the empirical loss
// is always on.
struct AblationMask {
  bool penalization = true;
  bool grad_correction = true;
  bool memo_xi = true;

  bool operator==(const AblationMask&) const = default;
};

struct AlgoParams {
  double fedprox_mu = 1e-4;
  double feddyn_alpha = 0.01;
  double feddc_alpha = 0.1;
  // FedSSG alignment strength as it enters the objective. When the gate mode
  // already carries alpha (logistic), the orchestrator sets this to 1.
  double ssg_penalty_alpha = 0.05;
  AlignmentForm ssg_alignment = AlignmentForm::InnerProduct;
  AblationMask ablation;
  double beta = 0.0;  // h += (gate + beta) * dtheta
  // Normalize the gradient correction by eta*steps (the correction then
  // approximates the local-global gradient gap) or by eta*E with E the epoch
  // count; quadratic tasks take one step per epoch so both agree.
  bool g_norm_per_step = true;
  // Divide the FedSSG aggregate by N instead of |S|; inspection only.
  bool literal_1_over_n = false;

  bool operator==(const AlgoParams&) const = default;
};

// Persistent per-client record. All auxiliary vectors are zero-initialized
// and stay O(d) regardless of round count.
struct ClientState {
  ParamVector h;  // drift memory (FedSSG) / drift variable (FedDC)
  int count = 0;
  bool has_prev_delta = false;
  ParamVector dtheta_prev;
  ParamVector scaffold_c;
  ParamVector feddyn_grad;
};

struct ServerState {
  ParamVector omega;
  int round = 0;
  ParamVector domega_prev;
  ParamVector scaffold_c;
  ParamVector feddyn_h;
  int n_clients = 1;
};

struct LocalRunConfig {
  int epochs = 5;
  int batch_size = 50;
  double lr = 0.1;
  double lr_decay_per_round = 1.0;
  double weight_decay = 0.0;

  bool operator==(const LocalRunConfig&) const = default;
};

struct LocalUpdateResult {
  ParamVector theta;
  ParamVector dtheta;
  ParamVector scaffold_dc;  // control-variate delta (SCAFFOLD only)
};

struct Contribution {
  int client = -1;
  ParamVector theta;
  ParamVector h;            // post-update memory, when the algorithm carries one
  ParamVector dtheta;
  ParamVector scaffold_dc;  // control-variate delta
};

ClientState make_client_state(std::size_t dim, Algorithm algo);
ServerState make_server_state(ParamVector omega0, int n_clients,
                              Algorithm algo);

// Runs E local epochs of minibatch SGD on the algorithm's local objective
// starting from the current global model. Updates the client's persistent
// state (drift memory, control variates, previous delta).
// `data` may be null for quadratic objectives, which take one full-gradient
// step per epoch. `eta` is the already-decayed learning rate for this round.
LocalUpdateResult local_update(Algorithm algo, const AlgoParams& params,
                               const ObjectiveSpec& spec, ClientState& state,
                               const ServerState& server,
                               const LabeledDataset* data,
                               const std::vector<std::size_t>& shard,
                               const LocalRunConfig& run, double eta,
                               double gate_value, RngStream& rng, int round,
                               int client_id);

// Folds cohort contributions into the server state and advances the round.
void aggregate(Algorithm algo, const AlgoParams& params, ServerState& server,
               const std::vector<Contribution>& contributions);

// Magnitude bound beyond which a run is declared divergent.
inline constexpr double kDivergenceBound = 1e6;

}  // namespace fedlab
