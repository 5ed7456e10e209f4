#pragma once

#include <cmath>
#include <concepts>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gaqat/errors.hpp"
#include "gaqat/freeze.hpp"
#include "gaqat/network.hpp"

namespace gaqat {

struct SagmConfig {
    double rho = 0.05;
    double alpha = 0.001;
    double lr_weights = 0.01;
    double lr_scales = 1e-5;
    double grad_norm_floor = 1e-12;
    // Include the normalized ascent step in the perturbed point. When false the
    // perturbed point is theta - alpha * g_task.
    bool perturb_with_epsilon = true;

    void validate() const;
};

/// Smallest value a scale may take after an update.
inline constexpr double kMinScale = 1e-12;

struct DualGradients {
    GradientSet task;
    GradientSet smooth;
    double loss_er = 0.0;
    double loss_p = 0.0;
    double gap = 0.0;  // loss_p - loss_er
    std::vector<ScaleGradientPair> pairs;
};

/// Anything sagm_dual_backward can drive: a loss with gradients over a flat
/// parameter vector plus read-only scale gradients.
template <class M>
concept SagmModel = requires(M& m, const M& cm, const Batch& b, std::span<const double> p) {
    { cm.evaluate(b) } -> std::same_as<LossGradients>;
    { cm.parameters() } -> std::same_as<std::vector<double>>;
    { m.assign_parameters(p) };
    { cm.quantizer_ids() } -> std::same_as<std::vector<std::string>>;
};

namespace detail {

inline double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

}  // namespace detail

/// Both gradient sets of the combined objective
///   L_ER(Q(theta)) + L_p(Q(theta + eps - alpha * g_task)),  eps = rho * g_task / ||g_task||.
/// Only weights and biases are shifted; scales are read at their current values.
/// Parameters are restored bit-exactly before returning.
template <SagmModel M>
DualGradients sagm_dual_backward(M& model, const Batch& batch, const SagmConfig& cfg) {
    if (batch.size() == 0) throw InputError("sagm_dual_backward: empty batch");

    DualGradients out;
    LossGradients at_theta;
    try {
        at_theta = model.evaluate(batch);
    } catch (const NumericError& e) {
        throw NumericError(std::string("empirical-risk phase: ") + e.what());
    }
    if (!std::isfinite(at_theta.loss)) throw NumericError("empirical-risk phase: non-finite loss");
    out.loss_er = at_theta.loss;
    out.task = std::move(at_theta.grads);

    const std::vector<double> theta = model.parameters();
    const auto& g = out.task.params;
    const double norm = std::max(detail::l2_norm(g), cfg.grad_norm_floor);
    const double eps_coef = cfg.perturb_with_epsilon ? cfg.rho / norm : 0.0;

    std::vector<double> shifted(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) shifted[i] = theta[i] + eps_coef * g[i] - cfg.alpha * g[i];

    model.assign_parameters(shifted);
    LossGradients at_shift;
    try {
        at_shift = model.evaluate(batch);
    } catch (const NumericError& e) {
        model.assign_parameters(theta);
        throw NumericError(std::string("perturbed phase: ") + e.what());
    }
    model.assign_parameters(theta);
    if (!std::isfinite(at_shift.loss)) throw NumericError("perturbed phase: non-finite loss");

    out.loss_p = at_shift.loss;
    out.smooth = std::move(at_shift.grads);
    out.gap = out.loss_p - out.loss_er;

    const auto ids = model.quantizer_ids();
    out.pairs.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.pairs.push_back({ids[i], out.task.scales[i], out.smooth.scales[i]});
    return out;
}

/// Empirical-risk-only gradients packaged like DualGradients, with a zero
/// smoothness set, so that apply_update performs plain descent.
template <SagmModel M>
DualGradients erm_gradients(const M& model, const Batch& batch) {
    if (batch.size() == 0) throw InputError("erm_gradients: empty batch");
    DualGradients out;
    auto lg = model.evaluate(batch);
    if (!std::isfinite(lg.loss)) throw NumericError("empirical-risk phase: non-finite loss");
    out.loss_er = lg.loss;
    out.loss_p = lg.loss;
    out.task = std::move(lg.grads);
    out.smooth.params.assign(out.task.params.size(), 0.0);
    out.smooth.scales.assign(out.task.scales.size(), 0.0);
    const auto ids = model.quantizer_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) out.pairs.push_back({ids[i], out.task.scales[i], 0.0});
    return out;
}

/// SGD step: weights and biases move by -lr_weights * (task + smooth); a frozen
/// scale moves by -lr_scales * smooth, an unfrozen one by -lr_scales * (task + smooth).
void apply_update(QuantizedNetwork& net, const DualGradients& duals, const FreezeMap& freeze, const SagmConfig& cfg);

}  // namespace gaqat
