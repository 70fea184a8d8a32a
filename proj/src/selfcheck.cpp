#include "psn/selfcheck.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "psn/degrade.hpp"
#include "psn/model.hpp"
#include "psn/prox.hpp"

namespace psn {

namespace {

bool report(std::ostream& out, const char* name, bool ok, real value, const char* detail) {
    out << (ok ? "pass" : "FAIL") << "  " << name << "  (" << detail << " = "
        << std::setprecision(6) << value << ")\n";
    return ok;
}

Tensor random_tensor(std::mt19937_64& rng, int n, int c, int h, int w) {
    std::uniform_real_distribution<real> uni(-1.0, 1.0);
    Tensor t(n, c, h, w);
    for (auto& v : t.vec()) v = uni(rng);
    return t;
}

bool check_adjoint(std::ostream& out) {
    std::mt19937_64 rng(7);
    real worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<int> kdist(0, 2);
        const int ks = 2 * kdist(rng) + 1;
        Kernel k(random_tensor(rng, 1, 1, ks, ks));
        Tensor x = random_tensor(rng, 1, 1, 8, 8);
        Tensor g = random_tensor(rng, 1, 1, 8, 8);
        const Tensor kx = conv2d(x, k);
        const Tensor ktg = conv2d_adjoint(g, k);
        const real lhs = kx.dot(g);
        const real rhs = x.dot(ktg);
        const real denom = kx.norm2() * g.norm2();
        if (denom > 0) worst = std::max(worst, std::abs(lhs - rhs) / denom);
    }
    return report(out, "adjoint <Kx,g> == <x,K^T g>", worst <= 1e-6, worst, "max rel err");
}

real grid_search_prox(real x, real beta, const std::function<real(real)>& h) {
    real best_z = -5, best = 1e300;
    for (real z = -5; z <= 5; z += 1e-4) {
        const real val = beta * (z - x) * (z - x) + h(z);
        if (val < best) {
            best = val;
            best_z = z;
        }
    }
    return best_z;
}

bool check_prox_oracles(std::ostream& out) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<real> xd(-3.0, 3.0), ld(0.0, 3.0), bd(0.5, 4.0);
    real worst = 0;
    for (int i = 0; i < 200; ++i) {
        const real xv = xd(rng), lambda = ld(rng), beta = bd(rng);
        Tensor x(1, 1, 1, 1);
        x.at(0, 0, 0, 0) = xv;
        const real got = soft_threshold(x, lambda, beta).at(0, 0, 0, 0);
        const real want = grid_search_prox(xv, beta, [&](real z) { return lambda * std::abs(z); });
        worst = std::max(worst, std::abs(got - want));
        const real alpha = ld(rng);
        const real got2 = quadratic_prox_exact(x, alpha, beta).at(0, 0, 0, 0);
        const real want2 = grid_search_prox(xv, beta, [&](real z) { return alpha * z * z; });
        worst = std::max(worst, std::abs(got2 - want2));
    }
    return report(out, "prox operators vs grid-search oracle", worst <= 2e-4, worst, "max abs err");
}

bool check_beta_convergence(std::ostream& out) {
    // quadratic h(z) = z^2: exact prox is beta*x/(beta+1)
    const real betas[] = {125, 250, 500, 1000};
    real errs_consistent[4], errs_paper[4];
    Tensor x(1, 1, 1, 1);
    x.at(0, 0, 0, 0) = 1.0;
    auto grad_h = [](const Tensor& t) { return t * 2.0; };
    for (int i = 0; i < 4; ++i) {
        const real beta = betas[i];
        const Tensor exact = quadratic_prox_exact(x, 1.0, beta);
        errs_consistent[i] =
            (gradient_step_prox_approx(x, grad_h, beta, ProxConstant::Consistent) - exact).max_abs();
        errs_paper[i] =
            (gradient_step_prox_approx(x, grad_h, beta, ProxConstant::Paper) - exact).max_abs();
    }
    const real slope_c = std::log(errs_consistent[3] / errs_consistent[0]) / std::log(betas[3] / betas[0]);
    const real slope_p = std::log(errs_paper[3] / errs_paper[0]) / std::log(betas[3] / betas[0]);
    bool ok = report(out, "consistent-constant prox error slope -2", std::abs(slope_c + 2.0) <= 0.2,
                     slope_c, "log-log slope");
    ok &= report(out, "paper-constant prox error slope -1", std::abs(slope_p + 1.0) <= 0.2, slope_p,
                 "log-log slope");
    return ok;
}

bool check_gradients(std::ostream& out) {
    PsnConfig cfg;
    cfg.stages = 2;
    cfg.scales = 2;
    cfg.block_depth = 2;
    cfg.channels = 8;
    PsnModel model = init_psn_model(cfg, 3);
    const Kernel k = solver_kernel(cfg);
    std::mt19937_64 rng(13);
    Tensor y = random_tensor(rng, 2, 1, 8, 8);
    Tensor gt = random_tensor(rng, 2, 1, 8, 8);

    auto loss_fn = [&]() {
        PsnTrace trace;
        psn_forward(model, y, k, Mode::Train, &trace, false);
        return multiscale_loss(trace.outputs, gt).value;
    };
    PsnTrace trace;
    psn_forward(model, y, k, Mode::Train, &trace, false);
    auto loss = multiscale_loss(trace.outputs, gt);
    GradStore grads;
    psn_backward(model, trace, loss.grads, k, grads);

    real worst = 0;
    const real step = 1e-5;
    std::uniform_real_distribution<real> pick(0.0, 1.0);
    for (const auto& key : model.params.trainable) {
        Tensor& p = model.params.get(key);
        // spot-check a few entries per tensor
        for (int probe = 0; probe < 3; ++probe) {
            const std::size_t idx = static_cast<std::size_t>(pick(rng) * static_cast<real>(p.size())) % p.size();
            const real saved = p.vec()[idx];
            p.vec()[idx] = saved + step;
            const real lp = loss_fn();
            p.vec()[idx] = saved - step;
            const real lm = loss_fn();
            p.vec()[idx] = saved;
            const real fd = (lp - lm) / (2 * step);
            const real an = grads.count(key) ? grads.at(key).vec()[idx] : 0.0;
            const real denom = std::max({std::abs(fd), std::abs(an), real(1e-6)});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return report(out, "micro-PSN analytic vs finite-difference gradients", worst <= 1e-3, worst,
                  "max rel err");
}

}  // namespace

bool run_selfcheck(std::ostream& out) {
    bool ok = true;
    ok &= check_adjoint(out);
    ok &= check_prox_oracles(out);
    ok &= check_beta_convergence(out);
    ok &= check_gradients(out);
    out << (ok ? "selfcheck passed" : "selfcheck FAILED") << "\n";
    return ok;
}

}  // namespace psn
