#include <doctest.h>

#include <cmath>
#include <random>

#include "psn/checkpoint.hpp"
#include "psn/metrics.hpp"
#include "psn/model.hpp"

using namespace psn;

namespace {

Tensor rand_tensor(std::mt19937_64& rng, int n, int c, int h, int w, real lo = 0, real hi = 1) {
    std::uniform_real_distribution<real> uni(lo, hi);
    Tensor t(n, c, h, w);
    for (auto& v : t.vec()) v = uni(rng);
    return t;
}

// Zeroes every Proximal Block conv weight/bias so each block is the identity
// (residual skip) while leaving the bilinear upsampler untouched.
void zero_blocks(PsnModel& model) {
    for (auto& [name, t] : model.params.values) {
        if (name.empty() || name[0] != 's') continue;
        if (name.ends_with(".w") || name.ends_with(".b"))
            for (auto& v : t.vec()) v = 0;
    }
}

// Smooth-ish random test images: blobs over a gradient background.
Tensor synth_image(std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(0, 1);
    Tensor img(1, 1, size, size);
    const real gx = uni(rng), gy = uni(rng), base = 0.2 + 0.6 * uni(rng);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            img.at(0, 0, i, j) = 0.3 * base + 0.3 * (gx * j + gy * i) / size;
    for (int b = 0; b < 6; ++b) {
        const real cy = uni(rng) * size, cx = uni(rng) * size;
        const real r = 2 + uni(rng) * size / 3, amp = uni(rng) * 0.5;
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                const real d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                if (d2 < r * r) img.at(0, 0, i, j) += amp * (1.0 - std::sqrt(d2) / r);
            }
    }
    for (auto& v : img.vec()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

}  // namespace

TEST_CASE("zeroed block reduces to the bare data-fidelity step") {
    PsnConfig cfg;
    cfg.scales = 1;
    cfg.stages = 1;
    cfg.block_depth = 2;
    cfg.channels = 4;
    PsnModel model = init_psn_model(cfg, 1);
    zero_blocks(model);
    const Kernel d = make_delta_kernel(1);
    std::mt19937_64 rng(3);
    Tensor x_prev = rand_tensor(rng, 1, 1, 8, 8);
    Tensor y = rand_tensor(rng, 1, 1, 8, 8);
    auto [v, x] = proximal_block_forward(model, 0, 0, x_prev, y, d, 8.0, Mode::Infer);
    CHECK(v.vec() == x_prev.vec());
    const Tensor want = data_fidelity_step(x_prev, y, d, 8.0);
    CHECK(x.vec() == want.vec());

    // beta=2 lands on y
    auto [v2, x2] = proximal_block_forward(model, 0, 0, x_prev, y, d, 2.0, Mode::Infer);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(x2.vec()[i] == doctest::Approx(y.vec()[i]).epsilon(1e-14));
}

TEST_CASE("random micro block matches a straight-line layer-sequence oracle") {
    PsnConfig cfg;
    cfg.scales = 1;
    cfg.stages = 1;
    cfg.block_depth = 2;
    cfg.channels = 4;
    PsnModel model = init_psn_model(cfg, 7);
    const Kernel d = make_delta_kernel(1);
    std::mt19937_64 rng(9);
    Tensor x_prev = rand_tensor(rng, 2, 1, 6, 6);
    Tensor y = rand_tensor(rng, 2, 1, 6, 6);
    auto [v, x] = proximal_block_forward(model, 0, 0, x_prev, y, d, 8.0, Mode::Infer);

    // independent re-walk of the published layer sequence
    Tensor h = x_prev;
    const auto specs = model.block_layer_specs();
    for (std::size_t li = 0; li < specs.size(); ++li)
        h = layer_forward(specs[li], model.params, PsnModel::block_prefix(0, 0, static_cast<int>(li)),
                          h, Mode::Infer);
    Tensor v_want = x_prev + h;
    CHECK(v.vec() == v_want.vec());
    CHECK(x.vec() == data_fidelity_step(v_want, y, d, 8.0).vec());
}

TEST_CASE("psn_forward with scales=1 is bit-identical to hqs_solve with LearnedProx") {
    PsnConfig cfg;
    cfg.scales = 1;
    cfg.stages = 3;
    cfg.block_depth = 3;
    cfg.channels = 6;
    PsnModel model = init_psn_model(cfg, 11);
    const Kernel k = solver_kernel(cfg);
    std::mt19937_64 rng(13);
    Tensor y = rand_tensor(rng, 1, 1, 8, 8);

    auto outputs = psn_forward(model, y, k, Mode::Infer);
    LearnedProx prox(model, 0);
    auto res = hqs_solve(y, k, prox, {cfg.beta, cfg.stages}, y);
    CHECK(outputs.front().vec() == res.x_final.vec());
}

TEST_CASE("per-scale output dims form the target pyramid sizes") {
    PsnConfig cfg;
    cfg.scales = 3;
    cfg.stages = 1;
    cfg.block_depth = 2;
    cfg.channels = 4;
    PsnModel model = init_psn_model(cfg, 15);
    const Kernel k = solver_kernel(cfg);
    Tensor y(1, 1, 32, 32, 0.4);
    auto outputs = psn_forward(model, y, k, Mode::Infer);
    REQUIRE(outputs.size() == 3);
    CHECK(outputs[0].h() == 32);
    CHECK(outputs[1].h() == 16);
    CHECK(outputs[2].h() == 8);
    CHECK_THROWS_AS(psn_forward(model, Tensor(1, 1, 30, 30), k, Mode::Infer), PreconditionError);
}

TEST_CASE("two-scale zeroed model matches the hand-composed chain") {
    PsnConfig cfg;
    cfg.scales = 2;
    cfg.stages = 1;
    cfg.block_depth = 2;
    cfg.channels = 4;
    cfg.beta = 8.0;
    PsnModel model = init_psn_model(cfg, 17);
    zero_blocks(model);
    const Kernel d = make_delta_kernel(1);
    std::mt19937_64 rng(19);
    Tensor y = rand_tensor(rng, 1, 1, 8, 8);

    auto outputs = psn_forward(model, y, d, Mode::Infer);

    // hand composition: coarse level output is y_coarse (identity block +
    // delta fidelity fixed point); upsample by the bilinear stride-2 kernel
    // (zero padded, pad 1), add the fine input, then one fidelity step.
    Tensor y_coarse = bicubic_resample(y, 2, ResampleDir::Down);
    for (std::size_t i = 0; i < y_coarse.size(); ++i)
        CHECK(outputs[1].vec()[i] == doctest::Approx(y_coarse.vec()[i]).epsilon(1e-12));

    const real prof[4] = {0.25, 0.75, 0.75, 0.25};
    Tensor up(1, 1, 8, 8);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int u = 0; u < 4; ++u)
                for (int v = 0; v < 4; ++v) {
                    const int p = 2 * i + u - 1, q = 2 * j + v - 1;
                    if (p >= 0 && p < 8 && q >= 0 && q < 8)
                        up.at(0, 0, p, q) += prof[u] * prof[v] *
                                             static_cast<real>(static_cast<float>(outputs[1].at(0, 0, i, j)));
                }
    // note: checkpoint-precision snap applies to weights, not activations;
    // recompute without the cast for the comparison
    up = Tensor(1, 1, 8, 8);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int u = 0; u < 4; ++u)
                for (int v = 0; v < 4; ++v) {
                    const int p = 2 * i + u - 1, q = 2 * j + v - 1;
                    if (p >= 0 && p < 8 && q >= 0 && q < 8)
                        up.at(0, 0, p, q) += prof[u] * prof[v] * outputs[1].at(0, 0, i, j);
                }
    Tensor merged = up + y;
    Tensor want = data_fidelity_step(merged, y, d, cfg.beta);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(outputs[0].vec()[i] == doctest::Approx(want.vec()[i]).epsilon(1e-10));
}

TEST_CASE("multiscale loss values and finite-difference gradient") {
    std::mt19937_64 rng(21);
    Tensor gt = rand_tensor(rng, 1, 1, 4, 4);
    SUBCASE("zero at the target with zero gradients") {
        auto res = multiscale_loss({gt}, gt);
        CHECK(res.value == 0.0);
        for (real g : res.grads[0].vec()) CHECK(g == 0.0);
    }
    SUBCASE("constant offset gives c^2") {
        Tensor out = gt;
        for (auto& v : out.vec()) v += 0.25;
        auto res = multiscale_loss({out}, gt);
        CHECK(res.value == doctest::Approx(0.0625).epsilon(1e-12));
    }
    SUBCASE("gradient matches finite differences") {
        Tensor out = rand_tensor(rng, 1, 1, 4, 4);
        auto res = multiscale_loss({out}, gt);
        const real step = 1e-6;
        for (std::size_t i = 0; i < out.size(); i += 3) {
            const real saved = out.vec()[i];
            out.vec()[i] = saved + step;
            const real lp = multiscale_loss({out}, gt).value;
            out.vec()[i] = saved - step;
            const real lm = multiscale_loss({out}, gt).value;
            out.vec()[i] = saved;
            CHECK(std::abs((lp - lm) / (2 * step) - res.grads[0].vec()[i]) <= 1e-6);
        }
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(multiscale_loss({Tensor(1, 1, 3, 3)}, gt), ShapeError);
    }
}

TEST_CASE("stage parameters are independent across stages") {
    PsnConfig cfg;
    cfg.scales = 1;
    cfg.stages = 3;
    cfg.block_depth = 2;
    cfg.channels = 4;
    PsnModel model = init_psn_model(cfg, 23);
    const Kernel k = solver_kernel(cfg);
    std::mt19937_64 rng(25);
    Tensor y = rand_tensor(rng, 1, 1, 8, 8);

    PsnTrace before;
    psn_forward(model, y, k, Mode::Infer, &before);
    // perturb the stage-2 (index 1) closing conv bias: it reaches the output
    // regardless of dead ReLU channels or the identity-start weight init
    const int last = static_cast<int>(model.block_layer_specs().size()) - 1;
    model.params.get(PsnModel::block_prefix(0, 1, last) + ".b").vec()[0] += 0.5;
    PsnTrace after;
    psn_forward(model, y, k, Mode::Infer, &after);

    CHECK(after.scales[0].stages[0].v.vec() == before.scales[0].stages[0].v.vec());
    CHECK(after.scales[0].stages[0].x.vec() == before.scales[0].stages[0].x.vec());
    CHECK(after.scales[0].stages[1].x.vec() != before.scales[0].stages[1].x.vec());
    CHECK(after.scales[0].stages[2].x.vec() != before.scales[0].stages[2].x.vec());
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
    PsnConfig cfg;
    cfg.scales = 2;
    cfg.stages = 2;
    cfg.block_depth = 2;
    cfg.channels = 8;
    PsnModel model = init_psn_model(cfg, 27);
    const Kernel k = solver_kernel(cfg);
    std::mt19937_64 rng(29);
    Tensor y = rand_tensor(rng, 2, 1, 8, 8);
    Tensor gt = rand_tensor(rng, 2, 1, 8, 8);

    auto loss_of = [&]() {
        PsnTrace trace;
        psn_forward(model, y, k, Mode::Train, &trace, false);
        return multiscale_loss(trace.outputs, gt).value;
    };
    PsnTrace trace;
    psn_forward(model, y, k, Mode::Train, &trace, false);
    auto loss = multiscale_loss(trace.outputs, gt);
    GradStore grads;
    psn_backward(model, trace, loss.grads, k, grads);

    const real step = 1e-5;
    for (const auto& key : model.params.trainable) {
        Tensor& p = model.params.get(key);
        for (int probe = 0; probe < 2; ++probe) {
            const std::size_t idx = rng() % p.size();
            const real saved = p.vec()[idx];
            p.vec()[idx] = saved + step;
            const real lp = loss_of();
            p.vec()[idx] = saved - step;
            const real lm = loss_of();
            p.vec()[idx] = saved;
            const real fd = (lp - lm) / (2 * step);
            const real an = grads.count(key) ? grads.at(key).vec()[idx] : 0.0;
            const real denom = std::max({std::abs(fd), std::abs(an), real(1e-4)});
            CHECK(std::abs(fd - an) / denom <= 1e-3);
        }
    }
}

TEST_CASE("micro training halves the loss and is seed-deterministic") {
    PsnConfig cfg;
    cfg.scales = 1;
    cfg.stages = 2;
    cfg.block_depth = 2;
    cfg.channels = 8;
    cfg.sigma_known = 25.0 / 255.0;
    TrainDataset dataset;
    for (int i = 0; i < 200; ++i) {
        Tensor img = synth_image(1000 + i, 16);
        dataset.patches.push_back(img);
    }
    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_size = 32;
    tc.learning_rate = 2e-3;
    tc.seed = 5;

    PsnModel model = init_psn_model(cfg, 5);
    TrainResult r1 = train_psn(model, dataset, tc);
    REQUIRE(r1.loss_curve.size() == 30);
    CHECK(r1.loss_curve.back() < 0.5 * r1.loss_curve.front());

    PsnModel model2 = init_psn_model(cfg, 5);
    TrainResult r2 = train_psn(model2, dataset, tc);
    CHECK(r1.loss_curve == r2.loss_curve);

    SUBCASE("lr=0 leaves parameters unchanged") {
        PsnModel frozen = init_psn_model(cfg, 6);
        const auto before = frozen.params.values;
        TrainConfig tc0 = tc;
        tc0.learning_rate = 0;
        tc0.epochs = 1;
        train_psn(frozen, dataset, tc0);
        for (const auto& key : frozen.params.trainable)
            CHECK(frozen.params.get(key).vec() == before.at(key).vec());
    }

    SUBCASE("restore on a near-clean input does not degrade it much") {
        Tensor clean = synth_image(99, 16);
        DegradationSpec spec{TaskKind::Denoise, 0.0, 1, 0};
        Tensor out = restore(model, clean, spec);
        // a sigma-25 model smooths clean inputs some; just require resemblance
        CHECK(psnr(out, clean) >= 20.0);
        Tensor out2 = restore(model, clean, spec);
        CHECK(out.vec() == out2.vec());
    }

    SUBCASE("checkpoint round trip preserves restore bit-identically") {
        const auto path = std::filesystem::temp_directory_path() / "psn_test_model.psn";
        save_checkpoint(model, path);
        PsnModel loaded = load_checkpoint(path);
        Tensor clean = synth_image(123, 16);
        DegradationSpec spec{TaskKind::Denoise, 0.0, 1, 0};
        CHECK(restore(model, clean, spec).vec() == restore(loaded, clean, spec).vec());
        std::filesystem::remove(path);
    }
}

TEST_CASE("restore shapes: 2x SR doubles dims and task mismatch throws") {
    PsnConfig cfg;
    cfg.task = TaskKind::Superres;
    cfg.sr_scale = 2;
    cfg.scales = 1;
    cfg.stages = 1;
    cfg.block_depth = 2;
    cfg.channels = 4;
    PsnModel model = init_psn_model(cfg, 31);
    Tensor y(1, 1, 32, 32, 0.5);
    DegradationSpec spec{TaskKind::Superres, 0.0, 2, 0};
    Tensor out = restore(model, y, spec);
    CHECK(out.h() == 64);
    CHECK(out.w() == 64);
    DegradationSpec bad{TaskKind::Denoise, 0.1, 1, 0};
    CHECK_THROWS_AS(restore(model, y, bad), ConfigError);
}

TEST_CASE("special case configurations") {
    PsnConfig vdsr = make_special_case_config(SpecialCase::Vdsr);
    CHECK(vdsr.stages == 1);
    CHECK(vdsr.scales == 1);
    CHECK(vdsr.beta == 2.0);
    CHECK(vdsr.block_depth == 20);
    CHECK(vdsr.task == TaskKind::Superres);

    PsnConfig dncnn = make_special_case_config(SpecialCase::Dncnn);
    CHECK(dncnn.stages == 1);
    CHECK(dncnn.scales == 1);
    CHECK(dncnn.task == TaskKind::Denoise);
    CHECK(solver_kernel(dncnn).is_delta());

    // dncnn with zeroed blocks at beta=2 returns y
    PsnModel model = init_psn_model(dncnn, 33);
    zero_blocks(model);
    std::mt19937_64 rng(35);
    Tensor y = rand_tensor(rng, 1, 1, 8, 8);
    auto outputs = psn_forward(model, y, solver_kernel(dncnn), Mode::Infer);
    PsnConfig dncnn2 = dncnn;
    dncnn2.beta = 2.0;
    PsnModel model2 = init_psn_model(dncnn2, 33);
    zero_blocks(model2);
    auto outputs2 = psn_forward(model2, y, solver_kernel(dncnn2), Mode::Infer);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(outputs2[0].vec()[i] == doctest::Approx(y.vec()[i]).epsilon(1e-14));
    CHECK(outputs[0].same_shape(y));
}

TEST_CASE("special case configs train on a tiny smoke set and reduce loss") {
    for (SpecialCase which : {SpecialCase::Vdsr, SpecialCase::Dncnn}) {
        PsnConfig cfg = make_special_case_config(which);
        // shrink for the smoke run
        cfg.block_depth = 2;
        cfg.channels = 4;
        if (cfg.task == TaskKind::Denoise) cfg.sigma_known = 25.0 / 255.0;
        TrainDataset dataset;
        for (int i = 0; i < 50; ++i) dataset.patches.push_back(synth_image(2000 + i, 16));
        TrainConfig tc;
        tc.epochs = 10;
        tc.batch_size = 25;
        tc.learning_rate = 2e-3;
        tc.seed = 3;
        PsnModel model = init_psn_model(cfg, 3);
        TrainResult r = train_psn(model, dataset, tc);
        CHECK(r.loss_curve.back() < r.loss_curve.front());
    }
}
