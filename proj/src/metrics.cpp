#include "psn/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace psn {

real psnr(const Tensor& a, const Tensor& b, real peak) {
    if (!a.same_shape(b)) throw ShapeError("psnr shape mismatch");
    if (peak <= 0) throw PreconditionError("peak must be positive");
    // extended-precision accumulation keeps the canonical constant-offset
    // cases (e.g. a uniform 0.1 difference) exact after the final log10
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const real d = a.vec()[i] - b.vec()[i];
        acc += static_cast<long double>(d) * d;
    }
    const real mse = static_cast<real>(acc / static_cast<long double>(a.size()));
    if (mse == 0) return std::numeric_limits<real>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

Tensor to_luminance(const Tensor& x) {
    if (x.c() == 1) return x;
    if (x.c() != 3) throw PreconditionError("ssim expects 1 or 3 channels");
    Tensor out(x.n(), 1, x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int i = 0; i < x.h(); ++i) {
            const real* r = x.row(n, 0, i);
            const real* g = x.row(n, 1, i);
            const real* b = x.row(n, 2, i);
            real* dst = out.row(n, 0, i);
            for (int j = 0; j < x.w(); ++j)
                dst[j] = 0.299 * r[j] + 0.587 * g[j] + 0.114 * b[j];
        }
    return out;
}

}  // namespace

real ssim(const Tensor& a_in, const Tensor& b_in) {
    if (!a_in.same_shape(b_in)) throw ShapeError("ssim shape mismatch");
    const Tensor a = to_luminance(a_in);
    const Tensor b = to_luminance(b_in);
    constexpr int win = 11;
    constexpr real sigma = 1.5;
    if (a.h() < win || a.w() < win)
        throw PreconditionError("image smaller than the 11x11 SSIM window");

    real w[win];
    real wsum = 0;
    for (int i = 0; i < win; ++i) {
        const real d = i - (win - 1) / 2.0;
        w[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        wsum += w[i];
    }
    for (auto& v : w) v /= wsum;

    constexpr real L = 1.0;
    constexpr real C1 = (0.01 * L) * (0.01 * L);
    constexpr real C2 = (0.03 * L) * (0.03 * L);

    real total = 0;
    std::size_t count = 0;
    for (int n = 0; n < a.n(); ++n)
        for (int i = 0; i + win <= a.h(); ++i)
            for (int j = 0; j + win <= a.w(); ++j) {
                real mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int u = 0; u < win; ++u) {
                    const real* ra = a.row(n, 0, i + u) + j;
                    const real* rb = b.row(n, 0, i + u) + j;
                    for (int v = 0; v < win; ++v) {
                        const real wt = w[u] * w[v];
                        mu_a += wt * ra[v];
                        mu_b += wt * rb[v];
                        aa += wt * ra[v] * ra[v];
                        bb += wt * rb[v] * rb[v];
                        ab += wt * ra[v] * rb[v];
                    }
                }
                const real var_a = aa - mu_a * mu_a;
                const real var_b = bb - mu_b * mu_b;
                const real cov = ab - mu_a * mu_b;
                const real num = (2 * mu_a * mu_b + C1) * (2 * cov + C2);
                const real den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
                total += num / den;
                ++count;
            }
    return total / static_cast<real>(count);
}

real EvalReport::mean_psnr() const {
    real s = 0;
    for (const auto& e : entries) s += e.psnr_db;
    return entries.empty() ? 0 : s / entries.size();
}

real EvalReport::mean_ssim() const {
    real s = 0;
    for (const auto& e : entries) s += e.ssim_val;
    return entries.empty() ? 0 : s / entries.size();
}

std::string EvalReport::to_table() const {
    std::size_t name_w = 5;
    for (const auto& e : entries) name_w = std::max(name_w, e.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "image"
       << std::right << std::setw(10) << "psnr_db" << std::setw(10) << "ssim" << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& e : entries)
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << e.name
           << std::right << std::setw(10) << e.psnr_db << std::setw(10) << e.ssim_val << "\n";
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "mean"
       << std::right << std::setw(10) << mean_psnr() << std::setw(10) << mean_ssim() << "\n";
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "image,psnr_db,ssim\n";
    os << std::setprecision(10);
    for (const auto& e : entries)
        os << e.name << "," << e.psnr_db << "," << e.ssim_val << "\n";
    return os.str();
}

}  // namespace psn
