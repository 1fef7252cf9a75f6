#include "fedlab/models.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace fedlab {

namespace {

using EMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using EConstMap = Eigen::Map<const EMatrix>;

struct LayerView {
  std::size_t w_offset;
  std::size_t b_offset;
  int in;
  int out;
};

std::vector<LayerView> layer_views(const std::vector<int>& sizes) {
  std::vector<LayerView> views;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    LayerView v;
    v.in = sizes[l];
    v.out = sizes[l + 1];
    v.w_offset = offset;
    offset += static_cast<std::size_t>(v.out) * v.in;
    v.b_offset = offset;
    offset += v.out;
    views.push_back(v);
  }
  return views;
}

std::size_t net_dimension(const std::vector<int>& sizes) {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    d += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }
  return d;
}

void require_dimension(const ObjectiveSpec& spec, const ParamVector& params) {
  if (params.size() != spec.dimension()) {
    throw DimensionError("params length " + std::to_string(params.size()) +
                         " does not match objective dimension " +
                         std::to_string(spec.dimension()));
  }
}

double weight_decay_loss(const ObjectiveSpec& spec, const ParamVector& params) {
  if (spec.l2_weight_decay == 0.0) return 0.0;
  return 0.5 * spec.l2_weight_decay * norm_sq(params);
}

std::pair<double, ParamVector> quadratic_loss_grad(const ObjectiveSpec& spec,
                                                   const ParamVector& params,
                                                   bool want_grad) {
  const std::size_t d = spec.quad_center.size();
  ParamVector diff(d);
  for (std::size_t k = 0; k < d; ++k) diff[k] = params[k] - spec.quad_center[k];
  // A * diff
  ParamVector adiff(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = spec.quad_hessian.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += row[c] * diff[c];
    adiff[r] = acc;
  }
  double loss = 0.5 * dot(diff, adiff) + weight_decay_loss(spec, params);
  if (!want_grad) return {loss, {}};
  if (spec.l2_weight_decay != 0.0) {
    axpy_inplace(spec.l2_weight_decay, params, adiff);
  }
  return {loss, std::move(adiff)};
}

// Forward pass of the fully connected net; returns per-layer pre-activations
// when the caller needs a backward pass.
struct ForwardState {
  std::vector<EMatrix> activations;  // activations[0] = inputs
  std::vector<EMatrix> pre_acts;     // per layer, before ReLU / softmax
};

ForwardState net_forward(const ObjectiveSpec& spec, const ParamVector& params,
                         const Batch& batch) {
  const auto views = layer_views(spec.layer_sizes);
  const auto b = static_cast<Eigen::Index>(batch.inputs.rows);
  ForwardState st;
  st.activations.reserve(views.size() + 1);
  st.pre_acts.reserve(views.size());
  st.activations.emplace_back(
      EConstMap(batch.inputs.data.data(), b, batch.inputs.cols));
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    EConstMap w(params.data() + v.w_offset, v.out, v.in);
    EConstMap bias(params.data() + v.b_offset, 1, v.out);
    EMatrix z = st.activations.back() * w.transpose();
    z.rowwise() += bias.row(0);
    if (!z.allFinite()) {
      throw NumericError("non-finite activation in layer " + std::to_string(l));
    }
    st.pre_acts.push_back(z);
    if (l + 1 < views.size()) {
      st.activations.push_back(z.cwiseMax(0.0));  // ReLU
    }
  }
  return st;
}

// Mean softmax cross-entropy over the batch from final-layer logits.
double softmax_ce_loss(const EMatrix& logits, const std::vector<int>& labels) {
  const auto b = logits.rows();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      sum += std::exp(logits(r, c) - m);
    }
    loss += -(logits(r, labels[r]) - m - std::log(sum));
  }
  return loss / static_cast<double>(b);
}

std::pair<double, ParamVector> net_loss_grad(const ObjectiveSpec& spec,
                                             const ParamVector& params,
                                             const Batch& batch) {
  if (batch.inputs.rows != batch.labels.size()) {
    throw DimensionError("batch rows and label count differ");
  }
  const auto views = layer_views(spec.layer_sizes);
  ForwardState st = net_forward(spec, params, batch);
  const EMatrix& logits = st.pre_acts.back();
  const auto b = logits.rows();
  const double loss = softmax_ce_loss(logits, batch.labels) +
                      weight_decay_loss(spec, params);

  // delta = (softmax - onehot) / b at the output layer.
  EMatrix delta(b, logits.cols());
  for (Eigen::Index r = 0; r < b; ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(r, c) - m);
      delta(r, c) = e;
      sum += e;
    }
    delta.row(r) /= sum;
    delta(r, batch.labels[r]) -= 1.0;
  }
  delta /= static_cast<double>(b);

  ParamVector grad(params.size(), 0.0);
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    EMap dw(grad.data() + v.w_offset, v.out, v.in);
    EMap db(grad.data() + v.b_offset, 1, v.out);
    dw.noalias() = delta.transpose() * st.activations[l];
    db.row(0) = delta.colwise().sum();
    if (l > 0) {
      EConstMap w(params.data() + v.w_offset, v.out, v.in);
      EMatrix da = delta * w;
      // ReLU mask from layer l-1 pre-activation.
      const EMatrix& z = st.pre_acts[l - 1];
      delta = (z.array() > 0.0).cast<double>() * da.array();
    }
  }
  if (spec.l2_weight_decay != 0.0) {
    axpy_inplace(spec.l2_weight_decay, params, grad);
  }
  return {loss, std::move(grad)};
}

}  // namespace

std::size_t ObjectiveSpec::dimension() const {
  if (family == ObjectiveFamily::Quadratic) return quad_center.size();
  return net_dimension(layer_sizes);
}

int ObjectiveSpec::feature_count() const {
  if (family == ObjectiveFamily::Quadratic) return 0;
  return layer_sizes.front();
}

int ObjectiveSpec::class_count() const {
  if (family == ObjectiveFamily::Quadratic) return 0;
  return layer_sizes.back();
}

std::pair<double, ParamVector> loss_and_grad(const ObjectiveSpec& spec,
                                             const ParamVector& params,
                                             const Batch& batch) {
  require_dimension(spec, params);
  if (spec.family == ObjectiveFamily::Quadratic) {
    return quadratic_loss_grad(spec, params, /*want_grad=*/true);
  }
  return net_loss_grad(spec, params, batch);
}

double loss_value(const ObjectiveSpec& spec, const ParamVector& params,
                  const Batch& batch) {
  require_dimension(spec, params);
  if (spec.family == ObjectiveFamily::Quadratic) {
    return quadratic_loss_grad(spec, params, /*want_grad=*/false).first;
  }
  ForwardState st = net_forward(spec, params, batch);
  return softmax_ce_loss(st.pre_acts.back(), batch.labels) +
         weight_decay_loss(spec, params);
}

double accuracy(const ObjectiveSpec& spec, const ParamVector& params,
                const Batch& batch) {
  require_dimension(spec, params);
  if (spec.family == ObjectiveFamily::Quadratic) {
    throw UnsupportedError("accuracy undefined for quadratic objectives");
  }
  ForwardState st = net_forward(spec, params, batch);
  const EMatrix& logits = st.pre_acts.back();
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    if (static_cast<int>(best) == batch.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

std::pair<double, ParamVector> penalized_term_value_and_grad(
    const ParamVector& params, const CorrectionTerms& c) {
  require_same_length(params, c.h_prev);
  require_same_length(params, c.omega_prev);
  const double w = c.gate * c.alpha;
  const std::size_t d = params.size();
  if (w == 0.0) return {0.0, ParamVector(d, 0.0)};
  // anchor u = omega_prev - h_prev; residual = params - u
  ParamVector residual(d);
  for (std::size_t k = 0; k < d; ++k) {
    residual[k] = params[k] - c.omega_prev[k] + c.h_prev[k];
  }
  if (c.alignment == AlignmentForm::InnerProduct) {
    const double value = w * dot(residual, c.h_prev);
    ParamVector grad(c.h_prev);
    scale_inplace(grad, w);
    return {value, std::move(grad)};
  }
  const double value = 0.5 * w * norm_sq(residual);
  scale_inplace(residual, w);
  return {value, std::move(residual)};
}

ParamVector gradient_correction_grad(const CorrectionTerms& c) {
  require_same_length(c.dtheta_prev, c.domega_prev);
  const double s = 1.0 / (c.eta * static_cast<double>(c.epochs));
  ParamVector out(c.dtheta_prev.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = s * (c.dtheta_prev[k] - c.domega_prev[k]);
  }
  return out;
}

double gradient_correction_value(const ParamVector& params,
                                 const CorrectionTerms& c) {
  return dot(params, gradient_correction_grad(c));
}

std::pair<double, ParamVector> composite_loss_and_grad(
    const ObjectiveSpec& spec, const ParamVector& params, const Batch& batch,
    const CorrectionTerms& c) {
  auto [loss, grad] = loss_and_grad(spec, params, batch);
  // With the gate off and no correction the plain result passes through
  // untouched, making the FedAvg reduction exact.
  const bool penalty_on = c.gate * c.alpha != 0.0;
  if (!penalty_on && !c.grad_correction_enabled) return {loss, std::move(grad)};
  if (penalty_on) {
    auto [pv, pg] = penalized_term_value_and_grad(params, c);
    loss += pv;
    axpy_inplace(1.0, pg, grad);
  }
  if (c.grad_correction_enabled) {
    ParamVector gg = gradient_correction_grad(c);
    loss += dot(params, gg);
    axpy_inplace(1.0, gg, grad);
  }
  return {loss, std::move(grad)};
}

ParamVector composite_grad(const ObjectiveSpec& spec, const ParamVector& params,
                           const Batch& batch, const CorrectionTerms& c) {
  return composite_loss_and_grad(spec, params, batch, c).second;
}

ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& params, double step) {
  std::vector<std::size_t> coords(params.size());
  for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
  const auto partials = finite_diff_grad_coords(f, params, step, coords);
  return ParamVector(partials.begin(), partials.end());
}

std::vector<double> finite_diff_grad_coords(
    const std::function<double(const ParamVector&)>& f,
    const ParamVector& params, double step,
    const std::vector<std::size_t>& coords) {
  if (!(step > 0.0)) throw NumericError("finite difference step must be > 0");
  ParamVector x = params;
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t k : coords) {
    const double orig = x[k];
    x[k] = orig + step;
    const double fp = f(x);
    x[k] = orig - step;
    const double fm = f(x);
    x[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("non-finite objective in finite difference probe");
    }
    out.push_back((fp - fm) / (2.0 * step));
  }
  return out;
}

ParamVector init_params(const ObjectiveSpec& spec, RngStream& rng) {
  const std::size_t d = spec.dimension();
  if (spec.family == ObjectiveFamily::Quadratic) return ParamVector(d, 0.0);
  ParamVector params(d, 0.0);
  const auto views = layer_views(spec.layer_sizes);
  for (const auto& v : views) {
    const double bound = std::sqrt(6.0 / static_cast<double>(v.in));
    for (std::size_t k = 0; k < static_cast<std::size_t>(v.out) * v.in; ++k) {
      params[v.w_offset + k] = bound * (2.0 * rng.next_double() - 1.0);
    }
    // biases stay zero
  }
  return params;
}

Batch make_batch(const DenseMatrix& inputs, const std::vector<int>& labels,
                 const std::vector<std::size_t>& indices) {
  Batch b;
  b.inputs = DenseMatrix(indices.size(), inputs.cols);
  b.labels.resize(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    std::copy(inputs.row(src), inputs.row(src) + inputs.cols, b.inputs.row(r));
    b.labels[r] = labels[src];
  }
  return b;
}

}  // namespace fedlab
