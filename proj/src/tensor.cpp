#include "psn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace psn {

Tensor::Tensor(int n, int c, int h, int w, real fill) : dims_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
        throw PreconditionError("tensor dims must be nonnegative");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << dims_[0] << "x" << dims_[1] << "x" << dims_[2] << "x" << dims_[3];
    return os.str();
}

Tensor& Tensor::operator+=(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("tensor += shape mismatch: " + shape_str() + " vs " + o.shape_str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("tensor -= shape mismatch: " + shape_str() + " vs " + o.shape_str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(real s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor Tensor::operator+(const Tensor& o) const { Tensor r = *this; r += o; return r; }
Tensor Tensor::operator-(const Tensor& o) const { Tensor r = *this; r -= o; return r; }
Tensor Tensor::operator*(real s) const { Tensor r = *this; r *= s; return r; }

real Tensor::dot(const Tensor& o) const {
    if (!same_shape(o)) throw ShapeError("dot shape mismatch");
    real acc = 0;
    for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
    return acc;
}

real Tensor::norm2() const { return std::sqrt(dot(*this)); }

real Tensor::max_abs() const {
    real m = 0;
    for (real v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    for (real v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Kernel::Kernel(Tensor t) : taps(std::move(t)) {
    if (taps.h() < 1 || taps.w() < 1 || taps.h() % 2 == 0 || taps.w() % 2 == 0)
        throw PreconditionError("kernel extents must be odd and >= 1");
    origin_y = taps.h() / 2;
    origin_x = taps.w() / 2;
}

bool Kernel::is_delta() const {
    if (out_channels() != in_channels()) return false;
    for (int co = 0; co < out_channels(); ++co)
        for (int ci = 0; ci < in_channels(); ++ci)
            for (int u = 0; u < kh(); ++u)
                for (int v = 0; v < kw(); ++v) {
                    const real expect = (co == ci && u == origin_y && v == origin_x) ? 1.0 : 0.0;
                    if (taps.at(co, ci, u, v) != expect) return false;
                }
    return true;
}

Tensor pad_reflect(const Tensor& x, int top, int bottom, int left, int right) {
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw PreconditionError("pad margins must be nonnegative");
    if (top >= x.h() || bottom >= x.h() || left >= x.w() || right >= x.w())
        throw PreconditionError("pad margin too large for image");
    Tensor out(x.n(), x.c(), x.h() + top + bottom, x.w() + left + right);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < out.h(); ++i) {
                const int sy = reflect_index(i - top, x.h());
                const real* src = x.row(n, c, sy);
                real* dst = out.row(n, c, i);
                for (int j = 0; j < out.w(); ++j)
                    dst[j] = src[reflect_index(j - left, x.w())];
            }
    return out;
}

namespace {

// Reflected source index per (output position, kernel tap), one table per axis.
std::vector<int> conv_index_table(int extent, int ksize, int origin) {
    std::vector<int> tab(static_cast<std::size_t>(extent) * ksize);
    for (int i = 0; i < extent; ++i)
        for (int u = 0; u < ksize; ++u)
            tab[static_cast<std::size_t>(i) * ksize + u] = reflect_index(i + origin - u, extent);
    return tab;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Kernel& k) {
    if (x.c() != k.in_channels())
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x.c()) +
                         ", kernel expects " + std::to_string(k.in_channels()));
    if (k.kh() > 2 * x.h() - 1 || k.kw() > 2 * x.w() - 1)
        throw PreconditionError("kernel larger than reflected support");
    Tensor out(x.n(), k.out_channels(), x.h(), x.w());
    const auto ytab = conv_index_table(x.h(), k.kh(), k.origin_y);
    const auto xtab = conv_index_table(x.w(), k.kw(), k.origin_x);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < k.out_channels(); ++co)
            for (int ci = 0; ci < x.c(); ++ci)
                for (int u = 0; u < k.kh(); ++u)
                    for (int v = 0; v < k.kw(); ++v) {
                        const real wt = k.taps.at(co, ci, u, v);
                        if (wt == 0.0) continue;
                        const int* xrow = &xtab[static_cast<std::size_t>(0)];
                        for (int i = 0; i < x.h(); ++i) {
                            const real* src = x.row(n, ci, ytab[static_cast<std::size_t>(i) * k.kh() + u]);
                            real* dst = out.row(n, co, i);
                            for (int j = 0; j < x.w(); ++j)
                                dst[j] += wt * src[xrow[static_cast<std::size_t>(j) * k.kw() + v]];
                        }
                    }
    return out;
}

Tensor conv2d_adjoint(const Tensor& g, const Kernel& k) {
    if (g.c() != k.out_channels())
        throw ShapeError("conv2d_adjoint channel mismatch: grad has " + std::to_string(g.c()) +
                         ", kernel produces " + std::to_string(k.out_channels()));
    Tensor out(g.n(), k.in_channels(), g.h(), g.w());
    const auto ytab = conv_index_table(g.h(), k.kh(), k.origin_y);
    const auto xtab = conv_index_table(g.w(), k.kw(), k.origin_x);
    // Exact transpose of conv2d: scatter each contribution back through the
    // same reflected index map.
    for (int n = 0; n < g.n(); ++n)
        for (int co = 0; co < k.out_channels(); ++co)
            for (int ci = 0; ci < k.in_channels(); ++ci)
                for (int u = 0; u < k.kh(); ++u)
                    for (int v = 0; v < k.kw(); ++v) {
                        const real wt = k.taps.at(co, ci, u, v);
                        if (wt == 0.0) continue;
                        for (int i = 0; i < g.h(); ++i) {
                            const real* src = g.row(n, co, i);
                            real* dst = out.row(n, ci, ytab[static_cast<std::size_t>(i) * k.kh() + u]);
                            for (int j = 0; j < g.w(); ++j)
                                dst[xtab[static_cast<std::size_t>(j) * k.kw() + v]] += wt * src[j];
                        }
                    }
    return out;
}

real bicubic_weight(real t) {
    constexpr real a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return a * (((t - 5.0) * t + 8.0) * t - 4.0);
    return 0.0;
}

namespace {

struct AxisFilter {
    // per output sample: first source index and normalized weights
    std::vector<int> first;
    std::vector<std::vector<real>> weights;
};

// scale = out_extent / in_extent; centers align via the half-pixel convention.
// Downsampling widens the kernel by 1/scale (antialias prefilter).
AxisFilter make_axis_filter(int in_extent, int out_extent) {
    const real scale = static_cast<real>(out_extent) / in_extent;
    const real fscale = (scale < 1.0) ? 1.0 / scale : 1.0;
    const real support = 2.0 * fscale;
    AxisFilter f;
    f.first.resize(out_extent);
    f.weights.resize(out_extent);
    for (int o = 0; o < out_extent; ++o) {
        const real center = (o + 0.5) / scale - 0.5;
        const int lo = static_cast<int>(std::ceil(center - support));
        const int hi = static_cast<int>(std::floor(center + support));
        f.first[o] = lo;
        auto& w = f.weights[o];
        w.resize(hi - lo + 1);
        real sum = 0;
        for (int m = lo; m <= hi; ++m) {
            const real wt = bicubic_weight((m - center) / fscale);
            w[m - lo] = wt;
            sum += wt;
        }
        for (auto& wt : w) wt /= sum;
    }
    return f;
}

Tensor resample_rows(const Tensor& x, const AxisFilter& f, int out_h) {
    Tensor out(x.n(), x.c(), out_h, x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < out_h; ++i) {
                real* dst = out.row(n, c, i);
                const auto& w = f.weights[i];
                for (std::size_t t = 0; t < w.size(); ++t) {
                    const real* src = x.row(n, c, reflect_index(f.first[i] + static_cast<int>(t), x.h()));
                    const real wt = w[t];
                    for (int j = 0; j < x.w(); ++j) dst[j] += wt * src[j];
                }
            }
    return out;
}

Tensor resample_cols(const Tensor& x, const AxisFilter& f, int out_w) {
    Tensor out(x.n(), x.c(), x.h(), out_w);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < x.h(); ++i) {
                const real* src = x.row(n, c, i);
                real* dst = out.row(n, c, i);
                for (int j = 0; j < out_w; ++j) {
                    const auto& w = f.weights[j];
                    real acc = 0;
                    for (std::size_t t = 0; t < w.size(); ++t)
                        acc += w[t] * src[reflect_index(f.first[j] + static_cast<int>(t), x.w())];
                    dst[j] = acc;
                }
            }
    return out;
}

}  // namespace

Tensor bicubic_resample(const Tensor& x, int factor, ResampleDir dir) {
    if (dir == ResampleDir::Down) {
        if (factor != 2 && factor != 3 && factor != 4)
            throw ConfigError("bicubic downsample factor must be 2, 3 or 4");
    } else {
        if (factor != 2) throw ConfigError("bicubic upsample supports factor 2 only");
    }
    int out_h, out_w;
    if (dir == ResampleDir::Down) {
        out_h = static_cast<int>(std::lround(static_cast<real>(x.h()) / factor));
        out_w = static_cast<int>(std::lround(static_cast<real>(x.w()) / factor));
    } else {
        out_h = x.h() * factor;
        out_w = x.w() * factor;
    }
    if (out_h < 1 || out_w < 1) throw PreconditionError("image too small to resample");
    const auto fy = make_axis_filter(x.h(), out_h);
    const auto fx = make_axis_filter(x.w(), out_w);
    return resample_cols(resample_rows(x, fy, out_h), fx, out_w);
}

std::vector<Tensor> build_target_pyramid(const Tensor& x_gt, int levels) {
    if (levels < 1) throw PreconditionError("pyramid needs at least one level");
    const int div = 1 << (levels - 1);
    if (x_gt.h() % div != 0 || x_gt.w() % div != 0)
        throw PreconditionError("spatial dims must be divisible by 2^(levels-1)");
    std::vector<Tensor> pyr;
    pyr.push_back(x_gt);
    for (int i = 1; i < levels; ++i)
        pyr.push_back(bicubic_resample(pyr.back(), 2, ResampleDir::Down));
    return pyr;
}

}  // namespace psn
