#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "psn/tensor.hpp"

namespace psn {

// x -> argmin_z beta*||z - x||^2 + h(z), pluggable per solver stage.
class ProxOperator {
public:
    virtual ~ProxOperator() = default;
    virtual Tensor apply(const Tensor& x, int stage) const = 0;
};

class SoftThresholdProx : public ProxOperator {
public:
    SoftThresholdProx(real lambda, real beta) : lambda_(lambda), beta_(beta) {}
    Tensor apply(const Tensor& x, int) const override;

private:
    real lambda_, beta_;
};

class QuadraticProx : public ProxOperator {
public:
    QuadraticProx(real alpha, real beta) : alpha_(alpha), beta_(beta) {}
    Tensor apply(const Tensor& x, int) const override;

private:
    real alpha_, beta_;
};

enum class ProxConstant { Paper, Consistent };

class GradientStepProx : public ProxOperator {
public:
    GradientStepProx(std::function<Tensor(const Tensor&)> grad_h, real beta,
                     ProxConstant constant = ProxConstant::Paper)
        : grad_h_(std::move(grad_h)), beta_(beta), constant_(constant) {}
    Tensor apply(const Tensor& x, int) const override;

private:
    std::function<Tensor(const Tensor&)> grad_h_;
    real beta_;
    ProxConstant constant_;
};

class IdentityProx : public ProxOperator {
public:
    Tensor apply(const Tensor& x, int) const override { return x; }
};

Tensor soft_threshold(const Tensor& x, real lambda, real beta);
Tensor quadratic_prox_exact(const Tensor& x, real alpha, real beta);
Tensor gradient_step_prox_approx(const Tensor& x,
                                 const std::function<Tensor(const Tensor&)>& grad_h,
                                 real beta, ProxConstant constant = ProxConstant::Paper);

// v - (2/beta) * K^T (K v - y), the data-fidelity gradient step.
Tensor data_fidelity_step(const Tensor& v, const Tensor& y, const Kernel& k, real beta);

struct HqsConfig {
    real beta = 8.0;
    int stages = 3;
    void validate() const {
        if (beta <= 0) throw PreconditionError("beta must be positive");
        if (stages < 1) throw PreconditionError("stages must be >= 1");
    }
};

struct HqsStage {
    Tensor v;
    Tensor x;
};

struct HqsResult {
    Tensor x_final;
    std::vector<HqsStage> trace;  // (v_t, x_t) for t = 1..S
};

// Alternating updates: v_t = prox(x_{t-1}), x_t = fidelity step on v_t.
HqsResult hqs_solve(const Tensor& y, const Kernel& k, const ProxOperator& prox_g,
                    const HqsConfig& config, const Tensor& x0);

}  // namespace psn
