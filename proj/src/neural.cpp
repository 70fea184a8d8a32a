#include "psn/neural.hpp"

#include <cmath>
#include <numbers>

namespace psn {

void LayerSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw PreconditionError("layer channels must be >= 1");
    if (kind == LayerKind::Conv && (kernel_size < 1 || kernel_size % 2 == 0))
        throw PreconditionError("conv kernel size must be odd");
    if (kind == LayerKind::TransposedConv && (kernel_size != 4 || stride != 2))
        throw PreconditionError("transposed conv supports kernel 4 / stride 2 only");
}

Tensor& ParamStore::get(const std::string& key) {
    auto it = values.find(key);
    if (it == values.end()) throw std::runtime_error("missing parameter: " + key);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw std::runtime_error("missing parameter: " + key);
    return it->second;
}

void ParamStore::add(const std::string& key, Tensor t, bool is_trainable) {
    if (is_trainable) {
        trainable.push_back(key);
        adam_m[key] = Tensor::zeros_like(t);
        adam_v[key] = Tensor::zeros_like(t);
    }
    values[key] = std::move(t);
}

void accumulate_grad(GradStore& grads, const std::string& key, const Tensor& g) {
    auto it = grads.find(key);
    if (it == grads.end())
        grads.emplace(key, g);
    else
        it->second += g;
}

void TrainConfig::validate() const {
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
        throw PreconditionError("adam betas must lie in (0,1)");
    if (batch_size < 1 || epochs < 0) throw PreconditionError("bad epochs/batch_size");
}

void snap_to_f32(Tensor& t) {
    for (auto& v : t.vec()) v = static_cast<real>(static_cast<float>(v));
}

std::uint64_t NormalSampler::next_u64() {
    // splitmix64
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

real NormalSampler::next() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    real u1 = 0;
    while (u1 <= 0)
        u1 = static_cast<real>(next_u64() >> 11) * 0x1.0p-53;
    const real u2 = static_cast<real>(next_u64() >> 11) * 0x1.0p-53;
    const real r = std::sqrt(-2.0 * std::log(u1));
    const real a = 2.0 * std::numbers::pi_v<real> * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

namespace {

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int kh = w.h(), kw = w.w(), cy = kh / 2, cx = kw / 2;
    Tensor out(x.n(), w.n(), x.h(), x.w());
    std::vector<int> ytab(static_cast<std::size_t>(x.h()) * kh), xtab(static_cast<std::size_t>(x.w()) * kw);
    for (int i = 0; i < x.h(); ++i)
        for (int u = 0; u < kh; ++u) ytab[static_cast<std::size_t>(i) * kh + u] = reflect_index(i + u - cy, x.h());
    for (int j = 0; j < x.w(); ++j)
        for (int v = 0; v < kw; ++v) xtab[static_cast<std::size_t>(j) * kw + v] = reflect_index(j + v - cx, x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.n(); ++co) {
            const real bias = b.at(0, 0, 0, co);
            for (int i = 0; i < x.h(); ++i) {
                real* dst = out.row(n, co, i);
                for (int j = 0; j < x.w(); ++j) dst[j] = bias;
            }
            for (int ci = 0; ci < x.c(); ++ci)
                for (int u = 0; u < kh; ++u)
                    for (int v = 0; v < kw; ++v) {
                        const real wt = w.at(co, ci, u, v);
                        for (int i = 0; i < x.h(); ++i) {
                            const real* src = x.row(n, ci, ytab[static_cast<std::size_t>(i) * kh + u]);
                            real* dst = out.row(n, co, i);
                            // interior fast path
                            const int j0 = cx - v >= 0 ? cx - v : 0;
                            const int j1 = x.w() - (v - cx) <= x.w() ? x.w() - std::max(0, v - cx) : x.w();
                            for (int j = 0; j < j0; ++j)
                                dst[j] += wt * src[xtab[static_cast<std::size_t>(j) * kw + v]];
                            const real* srcs = src + (v - cx);
                            for (int j = j0; j < j1; ++j) dst[j] += wt * srcs[j];
                            for (int j = j1; j < x.w(); ++j)
                                dst[j] += wt * src[xtab[static_cast<std::size_t>(j) * kw + v]];
                        }
                    }
        }
    return out;
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& g,
                   Tensor& gx, Tensor& gw, Tensor& gb) {
    const int kh = w.h(), kw = w.w(), cy = kh / 2, cx = kw / 2;
    std::vector<int> ytab(static_cast<std::size_t>(x.h()) * kh), xtab(static_cast<std::size_t>(x.w()) * kw);
    for (int i = 0; i < x.h(); ++i)
        for (int u = 0; u < kh; ++u) ytab[static_cast<std::size_t>(i) * kh + u] = reflect_index(i + u - cy, x.h());
    for (int j = 0; j < x.w(); ++j)
        for (int v = 0; v < kw; ++v) xtab[static_cast<std::size_t>(j) * kw + v] = reflect_index(j + v - cx, x.w());
    gx = Tensor::zeros_like(x);
    gw = Tensor::zeros_like(w);
    gb = Tensor(1, 1, 1, w.n());
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.n(); ++co) {
            real bsum = 0;
            for (int i = 0; i < x.h(); ++i) {
                const real* gr = g.row(n, co, i);
                for (int j = 0; j < x.w(); ++j) bsum += gr[j];
            }
            gb.at(0, 0, 0, co) += bsum;
            for (int ci = 0; ci < x.c(); ++ci)
                for (int u = 0; u < kh; ++u)
                    for (int v = 0; v < kw; ++v) {
                        const real wt = w.at(co, ci, u, v);
                        real wsum = 0;
                        for (int i = 0; i < x.h(); ++i) {
                            const int sy = ytab[static_cast<std::size_t>(i) * kh + u];
                            const real* src = x.row(n, ci, sy);
                            real* gxr = gx.row(n, ci, sy);
                            const real* gr = g.row(n, co, i);
                            for (int j = 0; j < x.w(); ++j) {
                                const int sx = xtab[static_cast<std::size_t>(j) * kw + v];
                                wsum += gr[j] * src[sx];
                                gxr[sx] += wt * gr[j];
                            }
                        }
                        gw.at(co, ci, u, v) += wsum;
                    }
        }
}

// Transposed conv, stride 2, kernel 4, pad 1: out[2i+u-1, 2j+v-1] += w*x[i,j].
Tensor tconv_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int oh = x.h() * 2, ow = x.w() * 2;
    Tensor out(x.n(), w.n(), oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.n(); ++co) {
            const real bias = b.at(0, 0, 0, co);
            for (int i = 0; i < oh; ++i) {
                real* dst = out.row(n, co, i);
                for (int j = 0; j < ow; ++j) dst[j] = bias;
            }
            for (int ci = 0; ci < x.c(); ++ci)
                for (int u = 0; u < 4; ++u)
                    for (int v = 0; v < 4; ++v) {
                        const real wt = w.at(co, ci, u, v);
                        if (wt == 0.0) continue;
                        for (int i = 0; i < x.h(); ++i) {
                            const int p = 2 * i + u - 1;
                            if (p < 0 || p >= oh) continue;
                            const real* src = x.row(n, ci, i);
                            real* dst = out.row(n, co, p);
                            for (int j = 0; j < x.w(); ++j) {
                                const int q = 2 * j + v - 1;
                                if (q >= 0 && q < ow) dst[q] += wt * src[j];
                            }
                        }
                    }
        }
    return out;
}

void tconv_backward(const Tensor& x, const Tensor& w, const Tensor& g,
                    Tensor& gx, Tensor& gw, Tensor& gb) {
    const int oh = x.h() * 2, ow = x.w() * 2;
    gx = Tensor::zeros_like(x);
    gw = Tensor::zeros_like(w);
    gb = Tensor(1, 1, 1, w.n());
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.n(); ++co) {
            real bsum = 0;
            for (int i = 0; i < oh; ++i) {
                const real* gr = g.row(n, co, i);
                for (int j = 0; j < ow; ++j) bsum += gr[j];
            }
            gb.at(0, 0, 0, co) += bsum;
            for (int ci = 0; ci < x.c(); ++ci)
                for (int u = 0; u < 4; ++u)
                    for (int v = 0; v < 4; ++v) {
                        const real wt = w.at(co, ci, u, v);
                        real wsum = 0;
                        for (int i = 0; i < x.h(); ++i) {
                            const int p = 2 * i + u - 1;
                            if (p < 0 || p >= oh) continue;
                            const real* src = x.row(n, ci, i);
                            real* gxr = gx.row(n, ci, i);
                            const real* gr = g.row(n, co, p);
                            for (int j = 0; j < x.w(); ++j) {
                                const int q = 2 * j + v - 1;
                                if (q < 0 || q >= ow) continue;
                                wsum += gr[q] * src[j];
                                gxr[j] += wt * gr[q];
                            }
                        }
                        gw.at(co, ci, u, v) += wsum;
                    }
        }
}

}  // namespace

Tensor layer_forward(const LayerSpec& spec, ParamStore& params, const std::string& prefix,
                     const Tensor& x, Mode mode, LayerCache* cache, bool update_running) {
    spec.validate();
    switch (spec.kind) {
        case LayerKind::Conv: {
            if (x.c() != spec.in_channels)
                throw ShapeError("conv layer expects " + std::to_string(spec.in_channels) +
                                 " channels, got " + std::to_string(x.c()));
            if (cache) cache->input = x;
            return conv_forward(x, params.get(prefix + ".w"), params.get(prefix + ".b"));
        }
        case LayerKind::TransposedConv: {
            if (x.c() != spec.in_channels) throw ShapeError("tconv channel mismatch");
            if (cache) cache->input = x;
            return tconv_forward(x, params.get(prefix + ".w"), params.get(prefix + ".b"));
        }
        case LayerKind::Relu: {
            if (cache) cache->input = x;
            Tensor out = x;
            for (auto& v : out.vec())
                if (v < 0) v = 0;
            return out;
        }
        case LayerKind::BatchNorm: {
            if (x.c() != spec.in_channels) throw ShapeError("batchnorm channel mismatch");
            const Tensor& gamma = params.get(prefix + ".gamma");
            const Tensor& shift = params.get(prefix + ".shift");
            const int C = x.c();
            const std::size_t m = static_cast<std::size_t>(x.n()) * x.h() * x.w();
            Tensor out = Tensor::zeros_like(x);
            if (mode == Mode::Infer) {
                const Tensor& rmean = params.get(prefix + ".rmean");
                const Tensor& rvar = params.get(prefix + ".rvar");
                for (int c = 0; c < C; ++c) {
                    const real inv = 1.0 / std::sqrt(rvar.at(0, 0, 0, c) + kBnEpsilon);
                    const real gsc = gamma.at(0, 0, 0, c) * inv;
                    const real off = shift.at(0, 0, 0, c) - gsc * rmean.at(0, 0, 0, c);
                    for (int n = 0; n < x.n(); ++n)
                        for (int i = 0; i < x.h(); ++i) {
                            const real* src = x.row(n, c, i);
                            real* dst = out.row(n, c, i);
                            for (int j = 0; j < x.w(); ++j) dst[j] = gsc * src[j] + off;
                        }
                }
                if (cache) cache->input = x;
                return out;
            }
            std::vector<real> mean(C, 0), var(C, 0), inv_std(C, 0);
            for (int c = 0; c < C; ++c) {
                real s = 0;
                for (int n = 0; n < x.n(); ++n)
                    for (int i = 0; i < x.h(); ++i) {
                        const real* src = x.row(n, c, i);
                        for (int j = 0; j < x.w(); ++j) s += src[j];
                    }
                mean[c] = s / static_cast<real>(m);
                real v2 = 0;
                for (int n = 0; n < x.n(); ++n)
                    for (int i = 0; i < x.h(); ++i) {
                        const real* src = x.row(n, c, i);
                        for (int j = 0; j < x.w(); ++j) {
                            const real d = src[j] - mean[c];
                            v2 += d * d;
                        }
                    }
                var[c] = v2 / static_cast<real>(m);
                inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEpsilon);
            }
            Tensor xhat = Tensor::zeros_like(x);
            for (int c = 0; c < C; ++c) {
                const real gsc = gamma.at(0, 0, 0, c);
                const real off = shift.at(0, 0, 0, c);
                for (int n = 0; n < x.n(); ++n)
                    for (int i = 0; i < x.h(); ++i) {
                        const real* src = x.row(n, c, i);
                        real* xh = xhat.row(n, c, i);
                        real* dst = out.row(n, c, i);
                        for (int j = 0; j < x.w(); ++j) {
                            xh[j] = (src[j] - mean[c]) * inv_std[c];
                            dst[j] = gsc * xh[j] + off;
                        }
                    }
            }
            if (update_running) {
                Tensor& rmean = params.get(prefix + ".rmean");
                Tensor& rvar = params.get(prefix + ".rvar");
                for (int c = 0; c < C; ++c) {
                    rmean.at(0, 0, 0, c) = kBnMomentum * rmean.at(0, 0, 0, c) + (1 - kBnMomentum) * mean[c];
                    rvar.at(0, 0, 0, c) = kBnMomentum * rvar.at(0, 0, 0, c) + (1 - kBnMomentum) * var[c];
                }
                snap_to_f32(rmean);
                snap_to_f32(rvar);
            }
            if (cache) {
                cache->input = x;
                cache->mean = std::move(mean);
                cache->inv_std = std::move(inv_std);
                cache->xhat = std::move(xhat);
            }
            return out;
        }
    }
    throw std::runtime_error("unknown layer kind");
}

Tensor layer_backward(const LayerSpec& spec, const ParamStore& params, const std::string& prefix,
                      const LayerCache& cache, const Tensor& grad_out, GradStore& grads, Mode mode) {
    switch (spec.kind) {
        case LayerKind::Conv: {
            Tensor gx, gw, gb;
            conv_backward(cache.input, params.get(prefix + ".w"), grad_out, gx, gw, gb);
            accumulate_grad(grads, prefix + ".w", gw);
            accumulate_grad(grads, prefix + ".b", gb);
            return gx;
        }
        case LayerKind::TransposedConv: {
            Tensor gx, gw, gb;
            tconv_backward(cache.input, params.get(prefix + ".w"), grad_out, gx, gw, gb);
            accumulate_grad(grads, prefix + ".w", gw);
            accumulate_grad(grads, prefix + ".b", gb);
            return gx;
        }
        case LayerKind::Relu: {
            Tensor gx = grad_out;
            const auto& xin = cache.input.vec();
            auto& g = gx.vec();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xin[i] <= 0) g[i] = 0;
            return gx;
        }
        case LayerKind::BatchNorm: {
            const Tensor& gamma = params.get(prefix + ".gamma");
            const Tensor& x = cache.input;
            const int C = x.c();
            if (mode == Mode::Infer) {
                const Tensor& rvar = params.get(prefix + ".rvar");
                Tensor gx = Tensor::zeros_like(x);
                for (int c = 0; c < C; ++c) {
                    const real gsc = gamma.at(0, 0, 0, c) / std::sqrt(rvar.at(0, 0, 0, c) + kBnEpsilon);
                    for (int n = 0; n < x.n(); ++n)
                        for (int i = 0; i < x.h(); ++i) {
                            const real* g = grad_out.row(n, c, i);
                            real* dst = gx.row(n, c, i);
                            for (int j = 0; j < x.w(); ++j) dst[j] = gsc * g[j];
                        }
                }
                return gx;
            }
            const std::size_t m = static_cast<std::size_t>(x.n()) * x.h() * x.w();
            Tensor gx = Tensor::zeros_like(x);
            Tensor ggamma(1, 1, 1, C), gshift(1, 1, 1, C);
            for (int c = 0; c < C; ++c) {
                real sum_g = 0, sum_gx = 0;
                for (int n = 0; n < x.n(); ++n)
                    for (int i = 0; i < x.h(); ++i) {
                        const real* g = grad_out.row(n, c, i);
                        const real* xh = cache.xhat.row(n, c, i);
                        for (int j = 0; j < x.w(); ++j) {
                            sum_g += g[j];
                            sum_gx += g[j] * xh[j];
                        }
                    }
                ggamma.at(0, 0, 0, c) = sum_gx;
                gshift.at(0, 0, 0, c) = sum_g;
                const real gsc = gamma.at(0, 0, 0, c);
                const real inv = cache.inv_std[c];
                const real mr = 1.0 / static_cast<real>(m);
                for (int n = 0; n < x.n(); ++n)
                    for (int i = 0; i < x.h(); ++i) {
                        const real* g = grad_out.row(n, c, i);
                        const real* xh = cache.xhat.row(n, c, i);
                        real* dst = gx.row(n, c, i);
                        for (int j = 0; j < x.w(); ++j)
                            dst[j] = gsc * inv * (g[j] - mr * gshift.at(0, 0, 0, c) -
                                                  xh[j] * mr * ggamma.at(0, 0, 0, c));
                    }
            }
            accumulate_grad(grads, prefix + ".gamma", ggamma);
            accumulate_grad(grads, prefix + ".shift", gshift);
            return gx;
        }
    }
    throw std::runtime_error("unknown layer kind");
}

void init_layer_params(const LayerSpec& spec, ParamStore& params, const std::string& prefix,
                       std::uint64_t seed) {
    spec.validate();
    NormalSampler rng(seed);
    switch (spec.kind) {
        case LayerKind::Conv: {
            const int k = spec.kernel_size;
            Tensor w(spec.out_channels, spec.in_channels, k, k);
            const real std_dev = std::sqrt(2.0 / (static_cast<real>(spec.in_channels) * k * k));
            for (auto& v : w.vec()) v = std_dev * rng.next();
            snap_to_f32(w);
            params.add(prefix + ".w", std::move(w), true);
            params.add(prefix + ".b", Tensor(1, 1, 1, spec.out_channels), true);
            break;
        }
        case LayerKind::TransposedConv: {
            // Bilinear upsampling weights on the channel diagonal.
            Tensor w(spec.out_channels, spec.in_channels, 4, 4);
            const real prof[4] = {0.25, 0.75, 0.75, 0.25};
            for (int co = 0; co < spec.out_channels; ++co)
                for (int ci = 0; ci < spec.in_channels; ++ci)
                    if (co % spec.in_channels == ci % spec.in_channels && (co == ci || spec.out_channels != spec.in_channels))
                        for (int u = 0; u < 4; ++u)
                            for (int v = 0; v < 4; ++v)
                                w.at(co, ci, u, v) = prof[u] * prof[v];
            snap_to_f32(w);
            params.add(prefix + ".w", std::move(w), true);
            params.add(prefix + ".b", Tensor(1, 1, 1, spec.out_channels), true);
            break;
        }
        case LayerKind::BatchNorm: {
            params.add(prefix + ".gamma", Tensor(1, 1, 1, spec.in_channels, 1.0), true);
            params.add(prefix + ".shift", Tensor(1, 1, 1, spec.in_channels, 0.0), true);
            params.add(prefix + ".rmean", Tensor(1, 1, 1, spec.in_channels, 0.0), false);
            params.add(prefix + ".rvar", Tensor(1, 1, 1, spec.in_channels, 1.0), false);
            break;
        }
        case LayerKind::Relu:
            break;
    }
}

void adam_step(ParamStore& params, const GradStore& grads, const TrainConfig& config, real lr_override) {
    config.validate();
    params.step += 1;
    const real lr = (lr_override > 0) ? lr_override : config.learning_rate;
    const real bc1 = 1.0 - std::pow(config.beta1, static_cast<real>(params.step));
    const real bc2 = 1.0 - std::pow(config.beta2, static_cast<real>(params.step));
    for (const auto& key : params.trainable) {
        auto git = grads.find(key);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        Tensor& p = params.get(key);
        if (!g.same_shape(p)) throw std::runtime_error("gradient shape mismatch for " + key);
        Tensor& m = params.adam_m[key];
        Tensor& v = params.adam_v[key];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.vec()[i] = config.beta1 * m.vec()[i] + (1 - config.beta1) * g.vec()[i];
            v.vec()[i] = config.beta2 * v.vec()[i] + (1 - config.beta2) * g.vec()[i] * g.vec()[i];
            const real mhat = m.vec()[i] / bc1;
            const real vhat = v.vec()[i] / bc2;
            p.vec()[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon_adam);
        }
        snap_to_f32(p);
    }
}

}  // namespace psn
