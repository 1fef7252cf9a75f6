#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fedlab/numkit.hpp"

namespace fedlab {

enum class ObjectiveFamily { Quadratic, Logistic, Mlp };

// Alignment penalty flavor for the drift-corrected anchor omega - h.
enum class AlignmentForm { InnerProduct, Proximal };

// One client's local objective family. Quadratic objectives carry their own
// SPD curvature and center; logistic/mlp share a fully connected net whose
// flat parameter layout is, per layer, W (out x in, row-major) then b (out).
// A logistic objective is the zero-hidden-layer case of the same net.
struct ObjectiveSpec {
  ObjectiveFamily family = ObjectiveFamily::Quadratic;
  std::vector<int> layer_sizes;  // nets: {features, hidden..., classes}
  double l2_weight_decay = 0.0;
  DenseMatrix quad_hessian;  // quadratic: A, SPD by construction (M^T M + lambda I)
  ParamVector quad_center;   // quadratic: theta*

  std::size_t dimension() const;
  int feature_count() const;
  int class_count() const;
};

struct Batch {
  DenseMatrix inputs;       // batch x features
  std::vector<int> labels;  // in [0, classes)
};

// Frozen round-start quantities entering the penalized and gradient
// correction terms of the composite local objective.
struct CorrectionTerms {
  double alpha = 0.0;  // alignment strength
  double gate = 0.0;   // expectation gate value phi(r)
  ParamVector h_prev;
  ParamVector omega_prev;
  ParamVector dtheta_prev;
  ParamVector domega_prev;
  double eta = 0.1;
  int epochs = 1;
  AlignmentForm alignment = AlignmentForm::InnerProduct;
  bool grad_correction_enabled = false;
};

// Empirical loss (batch mean plus weight decay) and its analytic gradient.
std::pair<double, ParamVector> loss_and_grad(const ObjectiveSpec& spec,
                                             const ParamVector& params,
                                             const Batch& batch);

// Forward-only loss, used by the finite-difference oracle and evaluation.
double loss_value(const ObjectiveSpec& spec, const ParamVector& params,
                  const Batch& batch);

// Fraction of batch rows whose argmax logit matches the label.
double accuracy(const ObjectiveSpec& spec, const ParamVector& params,
                const Batch& batch);

// Gated alignment term. Inner product: gate*alpha*<params - (omega-h), h>,
// gradient gate*alpha*h. Proximal: gate*alpha*0.5*||params - (omega-h)||^2,
// gradient gate*alpha*(params - omega + h).
std::pair<double, ParamVector> penalized_term_value_and_grad(
    const ParamVector& params, const CorrectionTerms& c);

// (1/(eta*epochs)) * (dtheta_prev - domega_prev); constant in params.
ParamVector gradient_correction_grad(const CorrectionTerms& c);
double gradient_correction_value(const ParamVector& params,
                                 const CorrectionTerms& c);

// Sum of the empirical, penalized and correction gradients. With the gate at
// zero and correction disabled this returns the plain gradient unchanged.
std::pair<double, ParamVector> composite_loss_and_grad(
    const ObjectiveSpec& spec, const ParamVector& params, const Batch& batch,
    const CorrectionTerms& c);
ParamVector composite_grad(const ObjectiveSpec& spec, const ParamVector& params,
                           const Batch& batch, const CorrectionTerms& c);

// Central differences (f(x+s e_k) - f(x-s e_k)) / (2s), all coordinates or a
// chosen subset.
ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& params, double step);
std::vector<double> finite_diff_grad_coords(
    const std::function<double(const ParamVector&)>& f,
    const ParamVector& params, double step,
    const std::vector<std::size_t>& coords);

// He-style uniform init scaled by fan-in for nets; zeros for quadratics.
ParamVector init_params(const ObjectiveSpec& spec, RngStream& rng);

// Gathers the given sample rows into a batch.
Batch make_batch(const DenseMatrix& inputs, const std::vector<int>& labels,
                 const std::vector<std::size_t>& indices);

}  // namespace fedlab
