#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "psn/degrade.hpp"
#include "psn/prox.hpp"

using namespace psn;

namespace {

Tensor scalar(real v) {
    Tensor t(1, 1, 1, 1);
    t.at(0, 0, 0, 0) = v;
    return t;
}

// Dense 1-D grid search minimizer of beta*(z-x)^2 + h(z), step 1e-4.
real grid_prox(real x, real beta, const std::function<real(real)>& h) {
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

}  // namespace

TEST_CASE("soft threshold pinned examples") {
    CHECK(soft_threshold(scalar(0.0), 3.0, 1.0).at(0, 0, 0, 0) == 0.0);
    // threshold lambda/(2 beta) = 1, so 3 -> 2; frozen from the grid oracle
    CHECK(soft_threshold(scalar(3.0), 2.0, 1.0).at(0, 0, 0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(soft_threshold(scalar(-3.0), 2.0, 1.0).at(0, 0, 0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
    Tensor x = scalar(0.7);
    CHECK(soft_threshold(x, 0.0, 2.0).vec() == x.vec());
    CHECK_THROWS_AS(soft_threshold(x, -1.0, 1.0), PreconditionError);
}

TEST_CASE("soft threshold and quadratic prox match the grid oracle on 1000 scalars") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<real> xd(-3.0, 3.0), ld(0.0, 4.0), bd(0.25, 4.0);
    for (int i = 0; i < 1000; ++i) {
        const real xv = xd(rng), beta = bd(rng);
        const real lambda = ld(rng);
        const real st = soft_threshold(scalar(xv), lambda, beta).at(0, 0, 0, 0);
        CHECK(std::abs(st - grid_prox(xv, beta, [&](real z) { return lambda * std::abs(z); })) <= 2e-4);
        const real alpha = ld(rng);
        const real qp = quadratic_prox_exact(scalar(xv), alpha, beta).at(0, 0, 0, 0);
        CHECK(std::abs(qp - grid_prox(xv, beta, [&](real z) { return alpha * z * z; })) <= 2e-4);
    }
}

TEST_CASE("quadratic prox pinned examples") {
    Tensor x = scalar(1.0);
    CHECK(quadratic_prox_exact(x, 0.0, 3.0).vec() == x.vec());
    CHECK(quadratic_prox_exact(x, 1.0, 1.0).at(0, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(quadratic_prox_exact(x, 1.0, 1e6).at(0, 0, 0, 0) - 1.0) <= 2e-6);
}

TEST_CASE("gradient-step prox approximation") {
    auto zero_grad = [](const Tensor& t) { return Tensor::zeros_like(t); };
    Tensor x = scalar(1.0);
    CHECK(gradient_step_prox_approx(x, zero_grad, 8.0).vec() == x.vec());

    // h(z) = z^2, paper constant: 1 - (2/8)*2 = 0.5
    auto quad_grad = [](const Tensor& t) { return t * 2.0; };
    CHECK(gradient_step_prox_approx(x, quad_grad, 8.0, ProxConstant::Paper).at(0, 0, 0, 0) ==
          doctest::Approx(0.5).epsilon(1e-12));

    // consistent constant: error vs exact prox decays as 1/beta^2
    real err500, err1000;
    {
        const Tensor e500 = quadratic_prox_exact(x, 1.0, 500.0);
        const Tensor e1000 = quadratic_prox_exact(x, 1.0, 1000.0);
        err500 = (gradient_step_prox_approx(x, quad_grad, 500.0, ProxConstant::Consistent) - e500).max_abs();
        err1000 = (gradient_step_prox_approx(x, quad_grad, 1000.0, ProxConstant::Consistent) - e1000).max_abs();
    }
    CHECK(err1000 * 4.0 <= err500 * 1.01);
}

TEST_CASE("both constants converge to identity as beta grows, consistent with slope -2") {
    auto quad_grad = [](const Tensor& t) { return t * 2.0; };
    Tensor x = scalar(1.0);
    const real betas[] = {125, 250, 500, 1000};
    real errs_c[4], errs_p[4];
    for (int i = 0; i < 4; ++i) {
        const Tensor exact = quadratic_prox_exact(x, 1.0, betas[i]);
        errs_c[i] = (gradient_step_prox_approx(x, quad_grad, betas[i], ProxConstant::Consistent) - exact).max_abs();
        errs_p[i] = (gradient_step_prox_approx(x, quad_grad, betas[i], ProxConstant::Paper) - exact).max_abs();
    }
    const real slope_c = std::log(errs_c[3] / errs_c[0]) / std::log(betas[3] / betas[0]);
    const real slope_p = std::log(errs_p[3] / errs_p[0]) / std::log(betas[3] / betas[0]);
    CHECK(std::abs(slope_c + 2.0) <= 0.2);
    CHECK(std::abs(slope_p + 1.0) <= 0.2);
}

TEST_CASE("data fidelity step algebra with delta kernel") {
    const Kernel d = make_delta_kernel(1);
    Tensor v(1, 1, 3, 3, 1.0);
    Tensor y(1, 1, 3, 3, 0.0);
    // beta=2: v - (v - y) = y
    CHECK(data_fidelity_step(v, y, d, 2.0).vec() == y.vec());
    // beta=8: 1 - 0.25*1 = 0.75
    const Tensor stepped = data_fidelity_step(v, y, d, 8.0);
    for (real out : stepped.vec()) CHECK(out == doctest::Approx(0.75).epsilon(1e-12));
    // v = y is a fixed point
    CHECK(data_fidelity_step(y, y, d, 8.0).vec() == y.vec());
}

TEST_CASE("data fidelity step shape mismatch throws") {
    const Kernel d = make_delta_kernel(1);
    Tensor v(1, 1, 3, 3), y(1, 1, 4, 4);
    CHECK_THROWS_AS(data_fidelity_step(v, y, d, 2.0), ShapeError);
}

TEST_CASE("hqs with identity prox and delta kernel reaches y in one stage at beta=2") {
    const Kernel d = make_delta_kernel(1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<real> uni(0, 1);
    Tensor y(1, 1, 4, 4), x0(1, 1, 4, 4);
    for (auto& v : y.vec()) v = uni(rng);
    for (auto& v : x0.vec()) v = uni(rng);
    IdentityProx prox;
    auto res = hqs_solve(y, d, prox, {2.0, 3}, x0);
    REQUIRE(res.trace.size() == 3);
    // stage 1 lands on y up to one rounding of v - (v - y)
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(res.trace[0].x.vec()[i] == doctest::Approx(y.vec()[i]).epsilon(1e-15));
    // stationary and bit-exact from stage 2 on (the subtraction is exact once v ~ y)
    CHECK(res.trace[1].x.vec() == y.vec());
    CHECK(res.trace[2].x.vec() == y.vec());
    CHECK(res.x_final.same_shape(x0));
}

TEST_CASE("hqs single soft-threshold stage matches the hand algebra") {
    const Kernel d = make_delta_kernel(1);
    Tensor y(1, 1, 2, 2, 0.2);
    Tensor x0(1, 1, 2, 2, 0.9);
    SoftThresholdProx prox(0.4, 8.0);
    auto res = hqs_solve(y, d, prox, {8.0, 1}, x0);
    const Tensor v1 = soft_threshold(x0, 0.4, 8.0);
    const Tensor want = v1 - (v1 - y) * 0.25;
    CHECK(res.x_final.vec() == want.vec());
    // at beta=2 the data step lands on y (constant images subtract exactly)
    auto res2 = hqs_solve(y, d, prox, {2.0, 1}, x0);
    for (real out : res2.x_final.vec()) CHECK(out == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("hqs with exact quadratic prox converges to the joint minimizer") {
    // objective: ||y - x||^2/... with delta kernel the two maps have the unique
    // common fixed point x* solving x = q(x) composed with the data step.
    // Oracle: run the fixed-point iteration to 1e-10.
    const Kernel d = make_delta_kernel(1);
    const real alpha = 1.0, beta = 8.0;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<real> uni(0, 1);
    Tensor y(1, 1, 4, 4);
    for (auto& v : y.vec()) v = uni(rng);
    QuadraticProx prox(alpha, beta);

    // oracle fixed point per pixel: x = (1 - 2/beta) * q * x + (2/beta) * y,
    // q = beta/(beta+alpha); iterate scalars independently
    Tensor oracle = y;
    for (auto& xv : oracle.vec()) {
        real x = 0.5;
        for (int it = 0; it < 10000; ++it) {
            const real v = (beta / (beta + alpha)) * x;
            const real nx = v - (2.0 / beta) * (v - xv);
            if (std::abs(nx - x) < 1e-14) { x = nx; break; }
            x = nx;
        }
        xv = x;
    }
    auto res = hqs_solve(y, d, prox, {beta, 500}, Tensor(1, 1, 4, 4, 0.5));
    for (std::size_t i = 0; i < oracle.size(); ++i)
        CHECK(res.x_final.vec()[i] == doctest::Approx(oracle.vec()[i]).epsilon(1e-9));
}

TEST_CASE("hqs stage outputs keep the x0 shape") {
    const Kernel d = make_delta_kernel(1);
    Tensor y(2, 1, 6, 4, 0.1), x0(2, 1, 6, 4, 0.0);
    IdentityProx prox;
    auto res = hqs_solve(y, d, prox, {8.0, 4}, x0);
    for (const auto& st : res.trace) {
        CHECK(st.v.same_shape(x0));
        CHECK(st.x.same_shape(x0));
    }
}
