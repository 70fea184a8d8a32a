#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace psn {

using real = double;

// Dense N x C x H x W tensor, row-major.
class Tensor {
public:
    Tensor() : dims_{0, 0, 0, 0} {}
    Tensor(int n, int c, int h, int w, real fill = 0.0);

    static Tensor zeros_like(const Tensor& t) {
        return Tensor(t.n(), t.c(), t.h(), t.w());
    }

    int n() const { return dims_[0]; }
    int c() const { return dims_[1]; }
    int h() const { return dims_[2]; }
    int w() const { return dims_[3]; }
    const std::array<int, 4>& dims() const { return dims_; }
    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
    std::string shape_str() const;

    std::size_t size() const { return data_.size(); }

    real& at(int n, int c, int y, int x) {
        return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    real at(int n, int c, int y, int x) const {
        return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    real* row(int n, int c, int y) {
        return data_.data() + ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3];
    }
    const real* row(int n, int c, int y) const {
        return data_.data() + ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3];
    }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& vec() { return data_; }
    const std::vector<real>& vec() const { return data_; }

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(real s);
    Tensor operator+(const Tensor& o) const;
    Tensor operator-(const Tensor& o) const;
    Tensor operator*(real s) const;

    real dot(const Tensor& o) const;
    real norm2() const;       // sqrt of sum of squares
    real max_abs() const;
    bool all_finite() const;

private:
    std::array<int, 4> dims_;
    std::vector<real> data_;
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct PreconditionError : std::invalid_argument {
    explicit PreconditionError(const std::string& msg) : std::invalid_argument(msg) {}
};
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// 2-D convolution filter in matrix-operator role (K and K^T).
// taps: Cout x Cin x kh x kw, kh/kw odd so the adjoint is a pure flip.
struct Kernel {
    Tensor taps;
    int origin_y = 0;
    int origin_x = 0;

    Kernel() = default;
    explicit Kernel(Tensor t);

    int out_channels() const { return taps.n(); }
    int in_channels() const { return taps.c(); }
    int kh() const { return taps.h(); }
    int kw() const { return taps.w(); }
    bool is_delta() const;
};

// Mirror index into [0, extent) without repeating the edge sample.
inline int reflect_index(int i, int extent) {
    if (extent == 1) return 0;
    const int period = 2 * (extent - 1);
    i %= period;
    if (i < 0) i += period;
    return (i < extent) ? i : period - i;
}

enum class ResampleDir { Up, Down };

Tensor pad_reflect(const Tensor& x, int top, int bottom, int left, int right);
Tensor conv2d(const Tensor& x, const Kernel& k);
Tensor conv2d_adjoint(const Tensor& g, const Kernel& k);
Tensor bicubic_resample(const Tensor& x, int factor, ResampleDir dir);
std::vector<Tensor> build_target_pyramid(const Tensor& x_gt, int levels);

// Keys cubic kernel, a = -0.5.
real bicubic_weight(real t);

}  // namespace psn
