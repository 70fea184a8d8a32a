#pragma once

#include <cstdint>
#include <string>

#include "psn/tensor.hpp"

namespace psn {

enum class TaskKind { Denoise, Superres };

// How y is produced from x: kernel + noise level + scale + seed.
struct DegradationSpec {
    TaskKind kind = TaskKind::Denoise;
    real sigma = 0.0;       // noise std on [0,1]-ranged intensities
    int scale = 1;          // 1 for denoising; 2/3/4 for SR
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_text() const;                      // key=value block
    static DegradationSpec from_text(const std::string& text);
};

// Seeded white Gaussian noise via Box-Muller on a 64-bit PRNG.
// Output is not clipped to [0,1].
Tensor add_gaussian_noise(const Tensor& x, real sigma, std::uint64_t seed);

Tensor apply_forward_model(const Tensor& x, const DegradationSpec& spec);

enum class KernelKind { Delta, Gaussian, BicubicLowpass };
Kernel make_kernel(KernelKind kind, real sigma_b = 0.0, int size = 0, int scale = 2, int channels = 1);

inline Kernel make_delta_kernel(int channels = 1) {
    return make_kernel(KernelKind::Delta, 0.0, 0, 2, channels);
}

}  // namespace psn
