#include "fedlab/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedlab {

namespace {

bool needs_memory(Algorithm algo) {
  return algo == Algorithm::FedSsg || algo == Algorithm::FedDc;
}

void check_magnitude(const ParamVector& v, int round, int client,
                     const char* where) {
  for (double x : v) {
    if (!std::isfinite(x) || std::abs(x) > kDivergenceBound) {
      throw DivergenceError(std::string(where) + ": parameter out of bounds", round,
                            client);
    }
  }
}

}  // namespace

ClientState make_client_state(std::size_t dim, Algorithm algo) {
  ClientState state;
  if (needs_memory(algo)) state.h.assign(dim, 0.0);
  if (algo == Algorithm::Scaffold) state.scaffold_c.assign(dim, 0.0);
  if (algo == Algorithm::FedDyn) state.feddyn_grad.assign(dim, 0.0);
  return state;
}

ServerState make_server_state(ParamVector omega0, int n_clients,
                              Algorithm algo) {
  ServerState server;
  const std::size_t dim = omega0.size();
  server.omega = std::move(omega0);
  server.domega_prev.assign(dim, 0.0);
  server.n_clients = n_clients;
  if (algo == Algorithm::Scaffold) server.scaffold_c.assign(dim, 0.0);
  if (algo == Algorithm::FedDyn) server.feddyn_h.assign(dim, 0.0);
  return server;
}

LocalUpdateResult local_update(Algorithm algo, const AlgoParams& params,
                               const ObjectiveSpec& spec, ClientState& state,
                               const ServerState& server,
                               const LabeledDataset* data,
                               const std::vector<std::size_t>& shard,
                               const LocalRunConfig& run, double eta,
                               double gate_value, RngStream& rng, int round,
                               int client_id) {
  const std::size_t dim = spec.dimension();
  if (server.omega.size() != dim) {
    throw DimensionError("global model does not match objective dimension");
  }
  const bool quadratic = spec.family == ObjectiveFamily::Quadratic;
  if (!quadratic && (data == nullptr || shard.empty())) {
    throw ConfigError("classification objective needs a data shard");
  }

  const int steps_per_epoch =
      quadratic ? 1
                : static_cast<int>((shard.size() + run.batch_size - 1) /
                                   run.batch_size);
  const int total_steps = run.epochs * steps_per_epoch;

  // FedSSG composite-term inputs, frozen at round start.
  CorrectionTerms ct;
  bool use_correction = false;
  if (algo == Algorithm::FedSsg) {
    use_correction = params.ablation.grad_correction && state.has_prev_delta;
    ct.alpha = params.ablation.penalization ? params.ssg_penalty_alpha : 0.0;
    ct.gate = gate_value;
    ct.h_prev = state.h;
    ct.omega_prev = server.omega;
    ct.dtheta_prev =
        state.has_prev_delta ? state.dtheta_prev : ParamVector(dim, 0.0);
    ct.domega_prev = server.domega_prev;
    ct.eta = eta;
    ct.epochs = params.g_norm_per_step ? total_steps : run.epochs;
    ct.alignment = params.ssg_alignment;
    ct.grad_correction_enabled = use_correction;
  }
  // FedDC gradient correction (published form normalizes by eta * steps).
  ParamVector feddc_corr;
  if (algo == Algorithm::FedDc && state.has_prev_delta) {
    feddc_corr.resize(dim);
    const double s = 1.0 / (eta * static_cast<double>(total_steps));
    for (std::size_t k = 0; k < dim; ++k) {
      feddc_corr[k] = s * (state.dtheta_prev[k] - server.domega_prev[k]);
    }
  }

  ParamVector theta = server.omega;
  std::vector<std::size_t> order(shard);
  Batch batch;  // reused; empty for quadratic

  try {
    for (int epoch = 0; epoch < run.epochs; ++epoch) {
      if (!quadratic) {
        for (std::size_t k = order.size(); k > 1; --k) {
          const std::size_t j = rng.next_below(k);
          std::swap(order[k - 1], order[j]);
        }
      }
      for (int step = 0; step < steps_per_epoch; ++step) {
        if (!quadratic) {
          const std::size_t begin = static_cast<std::size_t>(step) * run.batch_size;
          const std::size_t end =
              std::min(begin + run.batch_size, order.size());
          batch = make_batch(
              data->inputs, data->labels,
              std::vector<std::size_t>(order.begin() + begin, order.begin() + end));
        }

        ParamVector grad;
        switch (algo) {
          case Algorithm::FedAvg:
            grad = loss_and_grad(spec, theta, batch).second;
            break;
          case Algorithm::FedProx: {
            grad = loss_and_grad(spec, theta, batch).second;
            for (std::size_t k = 0; k < dim; ++k) {
              grad[k] += params.fedprox_mu * (theta[k] - server.omega[k]);
            }
            break;
          }
          case Algorithm::Scaffold: {
            grad = loss_and_grad(spec, theta, batch).second;
            for (std::size_t k = 0; k < dim; ++k) {
              grad[k] += server.scaffold_c[k] - state.scaffold_c[k];
            }
            break;
          }
          case Algorithm::FedDyn: {
            grad = loss_and_grad(spec, theta, batch).second;
            for (std::size_t k = 0; k < dim; ++k) {
              grad[k] += -state.feddyn_grad[k] +
                         params.feddyn_alpha * (theta[k] - server.omega[k]);
            }
            break;
          }
          case Algorithm::FedDc: {
            grad = loss_and_grad(spec, theta, batch).second;
            for (std::size_t k = 0; k < dim; ++k) {
              grad[k] +=
                  params.feddc_alpha * (theta[k] + state.h[k] - server.omega[k]);
            }
            if (!feddc_corr.empty()) axpy_inplace(1.0, feddc_corr, grad);
            break;
          }
          case Algorithm::FedSsg:
            grad = composite_grad(spec, theta, batch, ct);
            break;
        }
        axpy_inplace(-eta, grad, theta);
      }
      check_magnitude(theta, round, client_id, "local update");
    }
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("non-finite loss: ") + e.what(), round,
                          client_id);
  }

  LocalUpdateResult result;
  result.dtheta.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    result.dtheta[k] = theta[k] - server.omega[k];
  }

  switch (algo) {
    case Algorithm::FedSsg: {
      const double factor =
          (params.ablation.memo_xi ? gate_value : 1.0) + params.beta;
      axpy_inplace(factor, result.dtheta, state.h);
      state.dtheta_prev = result.dtheta;
      state.has_prev_delta = true;
      break;
    }
    case Algorithm::FedDc: {
      axpy_inplace(1.0, result.dtheta, state.h);
      state.dtheta_prev = result.dtheta;
      state.has_prev_delta = true;
      break;
    }
    case Algorithm::Scaffold: {
      // Option II control update: c_i+ = c_i - c + (omega - theta)/(K eta).
      const double s = 1.0 / (static_cast<double>(total_steps) * eta);
      result.scaffold_dc.resize(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        const double c_plus = state.scaffold_c[k] - server.scaffold_c[k] -
                              s * result.dtheta[k];
        result.scaffold_dc[k] = c_plus - state.scaffold_c[k];
        state.scaffold_c[k] = c_plus;
      }
      break;
    }
    case Algorithm::FedDyn: {
      for (std::size_t k = 0; k < dim; ++k) {
        state.feddyn_grad[k] -= params.feddyn_alpha * result.dtheta[k];
      }
      break;
    }
    default:
      break;
  }
  ++state.count;
  result.theta = std::move(theta);
  return result;
}

void aggregate(Algorithm algo, const AlgoParams& params, ServerState& server,
               const std::vector<Contribution>& contributions) {
  if (contributions.empty()) throw ConfigError("aggregate: empty cohort");
  const std::size_t dim = server.omega.size();
  const double m = static_cast<double>(contributions.size());
  const double n = static_cast<double>(server.n_clients);

  ParamVector omega_new(dim, 0.0);
  switch (algo) {
    case Algorithm::FedAvg:
    case Algorithm::FedProx:
    case Algorithm::Scaffold: {
      for (const auto& c : contributions) axpy_inplace(1.0, c.theta, omega_new);
      scale_inplace(omega_new, 1.0 / m);
      if (algo == Algorithm::Scaffold) {
        ParamVector dc(dim, 0.0);
        for (const auto& c : contributions) {
          require_same_length(c.scaffold_dc, dc);
          axpy_inplace(1.0, c.scaffold_dc, dc);
        }
        // c <- c + (|S|/N) * mean(delta_c)
        axpy_inplace(1.0 / n, dc, server.scaffold_c);
      }
      break;
    }
    case Algorithm::FedDyn: {
      ParamVector mean_theta(dim, 0.0);
      for (const auto& c : contributions) {
        axpy_inplace(1.0, c.theta, mean_theta);
        for (std::size_t k = 0; k < dim; ++k) {
          server.feddyn_h[k] -=
              params.feddyn_alpha / n * (c.theta[k] - server.omega[k]);
        }
      }
      scale_inplace(mean_theta, 1.0 / m);
      for (std::size_t k = 0; k < dim; ++k) {
        omega_new[k] = mean_theta[k] - server.feddyn_h[k] / params.feddyn_alpha;
      }
      break;
    }
    case Algorithm::FedDc:
    case Algorithm::FedSsg: {
      for (const auto& c : contributions) {
        require_same_length(c.theta, omega_new);
        require_same_length(c.h, omega_new);
        for (std::size_t k = 0; k < dim; ++k) {
          omega_new[k] += c.theta[k] + c.h[k];
        }
      }
      const double denom =
          (algo == Algorithm::FedSsg && params.literal_1_over_n) ? n : m;
      scale_inplace(omega_new, 1.0 / denom);
      break;
    }
  }
  check_magnitude(omega_new, server.round + 1, -1, "aggregate");
  // The global delta entering the next round's gradient correction is the
  // cohort mean of the local deltas. For mean-of-theta aggregation this
  // equals omega^t - omega^{t-1}; for memory-augmented aggregation it does
  // not, and using the raw model change would leak mean(h) into G.
  ParamVector mean_dtheta(dim, 0.0);
  for (const auto& c : contributions) axpy_inplace(1.0, c.dtheta, mean_dtheta);
  scale_inplace(mean_dtheta, 1.0 / m);
  server.domega_prev.swap(mean_dtheta);
  server.omega.swap(omega_new);
  ++server.round;
}

}  // namespace fedlab
