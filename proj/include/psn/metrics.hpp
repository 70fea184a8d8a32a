#pragma once

#include <string>
#include <vector>

#include "psn/tensor.hpp"

namespace psn {

// 10*log10(peak^2 / MSE); +inf for identical images.
real psnr(const Tensor& a, const Tensor& b, real peak = 1.0);

// Standard SSIM: 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// dynamic range 1.0, mean over valid window positions.
// Color images are reduced to luminance first.
real ssim(const Tensor& a, const Tensor& b);

struct EvalEntry {
    std::string name;
    real psnr_db = 0;
    real ssim_val = 0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    real mean_psnr() const;
    real mean_ssim() const;
    std::string to_table() const;  // aligned plain text
    std::string to_csv() const;    // image,psnr_db,ssim
};

}  // namespace psn
