#include "psn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace psn {

void PsnConfig::validate() const {
    if (stages < 1) throw PreconditionError("stages must be >= 1");
    if (beta <= 0) throw PreconditionError("beta must be positive");
    if (scales < 1) throw PreconditionError("scales must be >= 1");
    if (block_depth < 2) throw PreconditionError("block_depth must be >= 2");
    if (channels < 1) throw PreconditionError("channels must be >= 1");
    if (input_channels != 1 && input_channels != 3)
        throw PreconditionError("input_channels must be 1 or 3");
    if (task == TaskKind::Superres && sr_scale != 2 && sr_scale != 4)
        throw ConfigError("superres supports scale 2 or 4 (factor-2 upsampling chain)");
    if (task == TaskKind::Denoise && sr_scale != 1)
        throw PreconditionError("denoise requires sr_scale=1");
}

std::string PsnConfig::to_text() const {
    std::ostringstream os;
    os << "stages = " << stages << "\n";
    os << "beta = " << beta << "\n";
    os << "scales = " << scales << "\n";
    os << "block_depth = " << block_depth << "\n";
    os << "channels = " << channels << "\n";
    os << "input_channels = " << input_channels << "\n";
    os << "task = " << (task == TaskKind::Denoise ? "denoise" : "superres") << "\n";
    os << "sr_scale = " << sr_scale << "\n";
    os << "residual_skip = " << (residual_skip ? 1 : 0) << "\n";
    os << "sigma_known = " << sigma_known << "\n";
    os << "sigma_lo = " << sigma_lo << "\n";
    os << "sigma_hi = " << sigma_hi << "\n";
    return os.str();
}

PsnConfig PsnConfig::from_text(const std::string& text) {
    PsnConfig cfg;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty()) throw ConfigError("malformed config line: " + line);
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "stages") cfg.stages = std::stoi(val);
        else if (key == "beta") cfg.beta = std::stod(val);
        else if (key == "scales") cfg.scales = std::stoi(val);
        else if (key == "block_depth") cfg.block_depth = std::stoi(val);
        else if (key == "channels") cfg.channels = std::stoi(val);
        else if (key == "input_channels") cfg.input_channels = std::stoi(val);
        else if (key == "task") {
            if (val == "denoise") cfg.task = TaskKind::Denoise;
            else if (val == "superres") cfg.task = TaskKind::Superres;
            else throw ConfigError("unknown task: " + val);
        } else if (key == "sr_scale") cfg.sr_scale = std::stoi(val);
        else if (key == "residual_skip") cfg.residual_skip = std::stoi(val) != 0;
        else if (key == "sigma_known") cfg.sigma_known = std::stod(val);
        else if (key == "sigma_lo") cfg.sigma_lo = std::stod(val);
        else if (key == "sigma_hi") cfg.sigma_hi = std::stod(val);
        else throw ConfigError("unknown model config key: " + key);
    }
    cfg.validate();
    return cfg;
}

std::vector<LayerSpec> PsnModel::block_layer_specs() const {
    const auto& c = config;
    std::vector<LayerSpec> specs;
    for (int li = 0; li < c.block_depth; ++li) {
        const int in_ch = (li == 0) ? c.input_channels : c.channels;
        const int out_ch = (li == c.block_depth - 1) ? c.input_channels : c.channels;
        specs.push_back({LayerKind::Conv, in_ch, out_ch, 3, 1});
        if (li < c.block_depth - 1) {
            specs.push_back({LayerKind::Relu, out_ch, out_ch, 3, 1});
            specs.push_back({LayerKind::BatchNorm, out_ch, out_ch, 3, 1});
        }
    }
    return specs;
}

std::string PsnModel::block_prefix(int scale, int stage, int layer) {
    return "s" + std::to_string(scale) + ".t" + std::to_string(stage) + ".l" + std::to_string(layer);
}

std::string PsnModel::up_prefix(int scale) { return "up" + std::to_string(scale); }

LayerSpec PsnModel::up_spec() const {
    return {LayerKind::TransposedConv, config.input_channels, config.input_channels, 4, 2};
}

PsnModel init_psn_model(const PsnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PsnModel model;
    model.config = cfg;
    const auto specs = model.block_layer_specs();
    std::uint64_t counter = 0;
    for (int s = 0; s < cfg.scales; ++s)
        for (int t = 0; t < cfg.stages; ++t)
            for (std::size_t li = 0; li < specs.size(); ++li) {
                const std::string prefix = PsnModel::block_prefix(s, t, static_cast<int>(li));
                init_layer_params(specs[li], model.params, prefix,
                                  seed * 0x100000001b3ULL + (++counter));
                // zero the closing conv so each residual branch starts as the
                // identity; training moves away from pure fidelity iterations
                if (cfg.residual_skip && li + 1 == specs.size()) {
                    for (auto& v : model.params.get(prefix + ".w").vec()) v = 0;
                    for (auto& v : model.params.get(prefix + ".b").vec()) v = 0;
                }
            }
    for (int s = 0; s + 1 < cfg.scales; ++s)
        init_layer_params(model.up_spec(), model.params, PsnModel::up_prefix(s),
                          seed * 0x100000001b3ULL + (++counter));
    return model;
}

std::pair<Tensor, Tensor> proximal_block_forward(PsnModel& model, int scale, int stage,
                                                 const Tensor& x_prev, const Tensor& y,
                                                 const Kernel& k, real beta, Mode mode,
                                                 BlockCache* cache, bool update_running) {
    const auto specs = model.block_layer_specs();
    if (cache) {
        cache->input = x_prev;
        cache->layers.assign(specs.size(), LayerCache{});
    }
    Tensor h = x_prev;
    for (std::size_t li = 0; li < specs.size(); ++li)
        h = layer_forward(specs[li], model.params, PsnModel::block_prefix(scale, stage, static_cast<int>(li)),
                          h, mode, cache ? &cache->layers[li] : nullptr, update_running);
    Tensor v = model.config.residual_skip ? x_prev + h : std::move(h);
    Tensor x = data_fidelity_step(v, y, k, beta);
    return {std::move(v), std::move(x)};
}

namespace {

// Gradient of proximal_block_forward wrt its input, accumulating parameter grads.
Tensor proximal_block_backward(PsnModel& model, int scale, int stage, const BlockCache& cache,
                               const Tensor& grad_x, const Tensor& grad_v_extra_unused,
                               const Kernel& k, real beta, GradStore& grads) {
    (void)grad_v_extra_unused;
    // x = v - (2/beta) K^T (K v - y): symmetric Jacobian in v.
    Tensor g_v = grad_x - conv2d_adjoint(conv2d(grad_x, k), k) * (2.0 / beta);
    const auto specs = model.block_layer_specs();
    Tensor g = g_v;
    for (int li = static_cast<int>(specs.size()) - 1; li >= 0; --li)
        g = layer_backward(specs[li], model.params, PsnModel::block_prefix(scale, stage, li),
                           cache.layers[li], g, grads);
    if (model.config.residual_skip) g += g_v;
    return g;
}

}  // namespace

std::vector<Tensor> psn_forward(PsnModel& model, const Tensor& y, const Kernel& k, Mode mode,
                                PsnTrace* trace, bool update_running) {
    const auto& cfg = model.config;
    if (y.c() != cfg.input_channels)
        throw ShapeError("psn_forward: input has " + std::to_string(y.c()) + " channels, model expects " +
                         std::to_string(cfg.input_channels));
    const int div = 1 << (cfg.scales - 1);
    if (y.h() % div != 0 || y.w() % div != 0)
        throw PreconditionError("input dims must be divisible by 2^(scales-1)");

    // Input pyramid, finest first.
    std::vector<Tensor> y_pyr = build_target_pyramid(y, cfg.scales);
    if (trace) trace->scales.assign(cfg.scales, ScaleTrace{});
    std::vector<Tensor> outputs(cfg.scales);

    Tensor prev_out;
    for (int s = cfg.scales - 1; s >= 0; --s) {
        Tensor cur;
        if (s == cfg.scales - 1) {
            cur = y_pyr[s];
        } else {
            LayerCache* up_cache = trace ? &trace->scales[s].up_cache : nullptr;
            Tensor up = layer_forward(model.up_spec(), model.params, PsnModel::up_prefix(s),
                                      prev_out, mode, up_cache, update_running);
            cur = up + y_pyr[s];
        }
        if (trace) {
            trace->scales[s].scale_input = cur;
            trace->scales[s].stages.assign(cfg.stages, StageTrace{});
        }
        for (int t = 0; t < cfg.stages; ++t) {
            BlockCache* bc = trace ? &trace->scales[s].stages[t].block : nullptr;
            auto [v, x] = proximal_block_forward(model, s, t, cur, y_pyr[s], k, cfg.beta, mode,
                                                 bc, update_running);
            if (trace) {
                trace->scales[s].stages[t].v = v;
                trace->scales[s].stages[t].x = x;
            }
            cur = std::move(x);
        }
        outputs[s] = cur;
        prev_out = std::move(cur);
    }
    if (trace) trace->outputs = outputs;
    return outputs;
}

LossResult multiscale_loss(const std::vector<Tensor>& outputs, const Tensor& x_gt) {
    const int levels = static_cast<int>(outputs.size());
    const auto pyr = build_target_pyramid(x_gt, levels);
    LossResult res;
    res.grads.resize(levels);
    for (int s = 0; s < levels; ++s) {
        if (!outputs[s].same_shape(pyr[s]))
            throw ShapeError("multiscale_loss: output " + outputs[s].shape_str() +
                             " vs target " + pyr[s].shape_str());
        const real inv_count = 1.0 / static_cast<real>(outputs[s].size());
        Tensor diff = outputs[s] - pyr[s];
        real mse = 0;
        for (const real d : diff.vec()) mse += d * d;
        res.value += mse * inv_count;
        diff *= 2.0 * inv_count;
        res.grads[s] = std::move(diff);
    }
    return res;
}

void psn_backward(PsnModel& model, const PsnTrace& trace, const std::vector<Tensor>& out_grads,
                  const Kernel& k, GradStore& grads) {
    const auto& cfg = model.config;
    std::vector<Tensor> g_out(cfg.scales);
    for (int s = 0; s < cfg.scales; ++s) g_out[s] = out_grads[s];
    for (int s = 0; s < cfg.scales; ++s) {
        Tensor g = g_out[s];
        for (int t = cfg.stages - 1; t >= 0; --t)
            g = proximal_block_backward(model, s, t, trace.scales[s].stages[t].block, g,
                                        Tensor(), k, cfg.beta, grads);
        if (s < cfg.scales - 1) {
            // merged input = upsampled coarse output + this scale's pyramid input
            Tensor g_prev = layer_backward(model.up_spec(), model.params, PsnModel::up_prefix(s),
                                           trace.scales[s].up_cache, g, grads);
            g_out[s + 1] += g_prev;
        }
    }
}

Tensor LearnedProx::apply(const Tensor& x, int stage) const {
    const auto specs = model_->block_layer_specs();
    Tensor h = x;
    for (std::size_t li = 0; li < specs.size(); ++li)
        h = layer_forward(specs[li], model_->params,
                          PsnModel::block_prefix(scale_, stage - 1, static_cast<int>(li)), h, Mode::Infer);
    return model_->config.residual_skip ? x + h : h;
}

Kernel solver_kernel(const PsnConfig& cfg) {
    if (cfg.task == TaskKind::Denoise) return make_delta_kernel(cfg.input_channels);
    return make_kernel(KernelKind::BicubicLowpass, 0, 0, cfg.sr_scale, cfg.input_channels);
}

Tensor initial_estimate(const Tensor& y, const DegradationSpec& spec) {
    if (spec.kind == TaskKind::Denoise) return y;
    Tensor x0 = y;
    for (int f = spec.scale; f > 1; f /= 2) {
        if (f % 2 != 0) throw ConfigError("restore supports power-of-two SR scales");
        x0 = bicubic_resample(x0, 2, ResampleDir::Up);
    }
    return x0;
}

namespace {

Tensor batch_stack(const std::vector<Tensor>& items, const std::vector<int>& idx, int lo, int hi) {
    const Tensor& first = items[idx[lo]];
    Tensor out(hi - lo, first.c(), first.h(), first.w());
    for (int b = lo; b < hi; ++b) {
        const Tensor& t = items[idx[b]];
        if (t.c() != first.c() || t.h() != first.h() || t.w() != first.w())
            throw ShapeError("training patches must share one shape");
        std::copy(t.vec().begin(), t.vec().end(),
                  out.vec().begin() + static_cast<std::size_t>(b - lo) * t.size());
    }
    return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL + c + 0x94d049bb133111ebULL;
    z ^= z >> 29;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 32;
    return z;
}

}  // namespace

TrainResult train_psn(PsnModel& model, const TrainDataset& dataset, const TrainConfig& tc) {
    tc.validate();
    if (dataset.patches.empty()) throw ConfigError("training dataset is empty");
    const auto& cfg = model.config;
    const Kernel k = solver_kernel(cfg);
    const bool sigma_range = cfg.sigma_hi > cfg.sigma_lo;
    TrainResult result;

    std::vector<int> order(dataset.patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix_seed(tc.seed, static_cast<std::uint64_t>(epoch), 0xabcdULL));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const real lr = tc.learning_rate *
                        std::pow(tc.lr_decay, tc.lr_decay_every > 0 ? epoch / tc.lr_decay_every : 0);
        real epoch_loss = 0;
        int batches = 0;
        for (int lo = 0; lo < static_cast<int>(order.size()); lo += tc.batch_size) {
            const int hi = std::min<int>(lo + tc.batch_size, static_cast<int>(order.size()));
            Tensor clean = batch_stack(dataset.patches, order, lo, hi);
            // Fresh degradation every batch.
            Tensor input;
            if (cfg.task == TaskKind::Denoise) {
                input = clean;
                for (int b = 0; b < input.n(); ++b) {
                    real sigma = cfg.sigma_known >= 0 ? cfg.sigma_known : 0;
                    const std::uint64_t s = mix_seed(tc.seed, static_cast<std::uint64_t>(epoch),
                                                     static_cast<std::uint64_t>(lo + b + 1));
                    if (sigma_range) {
                        std::mt19937_64 rng(s ^ 0x5555aaaaULL);
                        std::uniform_real_distribution<real> uni(cfg.sigma_lo, cfg.sigma_hi);
                        sigma = uni(rng);
                    }
                    Tensor one(1, input.c(), input.h(), input.w());
                    std::copy(input.vec().begin() + static_cast<std::size_t>(b) * one.size(),
                              input.vec().begin() + static_cast<std::size_t>(b + 1) * one.size(),
                              one.vec().begin());
                    one = add_gaussian_noise(one, sigma, s);
                    std::copy(one.vec().begin(), one.vec().end(),
                              input.vec().begin() + static_cast<std::size_t>(b) * one.size());
                }
            } else {
                DegradationSpec spec{TaskKind::Superres, 0, cfg.sr_scale, 0};
                Tensor lr_img = apply_forward_model(clean, spec);
                input = initial_estimate(lr_img, spec);
            }
            PsnTrace trace;
            psn_forward(model, input, k, Mode::Train, &trace, true);
            LossResult loss = multiscale_loss(trace.outputs, clean);
            epoch_loss += loss.value;
            ++batches;
            GradStore grads;
            psn_backward(model, trace, loss.grads, k, grads);
            adam_step(model.params, grads, tc, lr);
        }
        result.loss_curve.push_back(epoch_loss / std::max(1, batches));
    }
    return result;
}

Tensor restore(PsnModel& model, const Tensor& y, const DegradationSpec& spec) {
    spec.validate();
    if (spec.kind != model.config.task)
        throw ConfigError("model task does not match degradation spec");
    if (spec.kind == TaskKind::Superres && spec.scale != model.config.sr_scale)
        throw ConfigError("model SR scale does not match degradation spec");
    const Kernel k = solver_kernel(model.config);
    Tensor x0 = initial_estimate(y, spec);
    auto outputs = psn_forward(model, x0, k, Mode::Infer);
    Tensor out = std::move(outputs.front());
    for (auto& v : out.vec()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

PsnConfig make_special_case_config(SpecialCase which) {
    PsnConfig cfg;
    cfg.stages = 1;
    cfg.scales = 1;
    cfg.residual_skip = true;
    if (which == SpecialCase::Vdsr) {
        cfg.task = TaskKind::Superres;
        cfg.sr_scale = 2;
        cfg.beta = 2.0;
        cfg.block_depth = 20;
    } else {
        cfg.task = TaskKind::Denoise;
        cfg.sr_scale = 1;
        cfg.block_depth = 10;
    }
    return cfg;
}

}  // namespace psn
