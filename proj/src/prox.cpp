#include "psn/prox.hpp"

#include <cmath>

namespace psn {

Tensor soft_threshold(const Tensor& x, real lambda, real beta) {
    if (lambda < 0) throw PreconditionError("lambda must be nonnegative");
    if (beta <= 0) throw PreconditionError("beta must be positive");
    const real thr = lambda / (2.0 * beta);
    Tensor out = x;
    for (auto& v : out.vec()) {
        const real mag = std::abs(v) - thr;
        v = (mag > 0) ? std::copysign(mag, v) : 0.0;
    }
    return out;
}

Tensor quadratic_prox_exact(const Tensor& x, real alpha, real beta) {
    if (alpha < 0) throw PreconditionError("alpha must be nonnegative");
    if (beta <= 0) throw PreconditionError("beta must be positive");
    return x * (beta / (beta + alpha));
}

Tensor gradient_step_prox_approx(const Tensor& x,
                                 const std::function<Tensor(const Tensor&)>& grad_h,
                                 real beta, ProxConstant constant) {
    if (beta <= 0) throw PreconditionError("beta must be positive");
    const real step = (constant == ProxConstant::Paper) ? 2.0 / beta : 1.0 / (2.0 * beta);
    return x - grad_h(x) * step;
}

Tensor SoftThresholdProx::apply(const Tensor& x, int) const {
    return soft_threshold(x, lambda_, beta_);
}

Tensor QuadraticProx::apply(const Tensor& x, int) const {
    return quadratic_prox_exact(x, alpha_, beta_);
}

Tensor GradientStepProx::apply(const Tensor& x, int) const {
    return gradient_step_prox_approx(x, grad_h_, beta_, constant_);
}

Tensor data_fidelity_step(const Tensor& v, const Tensor& y, const Kernel& k, real beta) {
    if (beta <= 0) throw PreconditionError("beta must be positive");
    Tensor residual = conv2d(v, k);
    if (!residual.same_shape(y))
        throw ShapeError("data_fidelity_step: K v has shape " + residual.shape_str() +
                         " but y has shape " + y.shape_str());
    residual -= y;
    return v - conv2d_adjoint(residual, k) * (2.0 / beta);
}

HqsResult hqs_solve(const Tensor& y, const Kernel& k, const ProxOperator& prox_g,
                    const HqsConfig& config, const Tensor& x0) {
    config.validate();
    HqsResult result;
    Tensor x = x0;
    for (int t = 1; t <= config.stages; ++t) {
        Tensor v = prox_g.apply(x, t);
        if (!v.same_shape(x)) throw ShapeError("prox operator changed tensor shape");
        x = data_fidelity_step(v, y, k, config.beta);
        result.trace.push_back({std::move(v), x});
    }
    result.x_final = x;
    return result;
}

}  // namespace psn
