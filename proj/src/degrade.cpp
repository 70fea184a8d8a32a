#include "psn/degrade.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace psn {

void DegradationSpec::validate() const {
    if (sigma < 0) throw PreconditionError("sigma must be nonnegative");
    if (kind == TaskKind::Denoise && scale != 1)
        throw PreconditionError("denoise spec requires scale=1");
    if (kind == TaskKind::Superres) {
        if (sigma != 0) throw PreconditionError("superres spec requires sigma=0");
        if (scale != 2 && scale != 3 && scale != 4)
            throw PreconditionError("superres scale must be 2, 3 or 4");
    }
}

std::string DegradationSpec::to_text() const {
    std::ostringstream os;
    os << "kind = " << (kind == TaskKind::Denoise ? "denoise" : "superres") << "\n";
    os << "sigma = " << sigma << "\n";
    os << "scale = " << scale << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

DegradationSpec DegradationSpec::from_text(const std::string& text) {
    DegradationSpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (key == "kind") {
            if (val == "denoise") spec.kind = TaskKind::Denoise;
            else if (val == "superres") spec.kind = TaskKind::Superres;
            else throw ConfigError("unknown degradation kind: " + val);
        } else if (key == "sigma") {
            spec.sigma = std::stod(val);
        } else if (key == "scale") {
            spec.scale = std::stoi(val);
        } else if (key == "seed") {
            spec.seed = std::stoull(val);
        } else {
            throw ConfigError("unknown degradation key: " + key);
        }
    }
    spec.validate();
    return spec;
}

Tensor add_gaussian_noise(const Tensor& x, real sigma, std::uint64_t seed) {
    if (sigma < 0) throw PreconditionError("sigma must be nonnegative");
    Tensor y = x;
    if (sigma == 0) return y;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(0.0, 1.0);
    auto& data = y.vec();
    // Box-Muller, pairs of uniforms -> pairs of normals.
    for (std::size_t i = 0; i < data.size(); i += 2) {
        real u1 = uni(rng);
        while (u1 <= 0) u1 = uni(rng);
        const real u2 = uni(rng);
        const real r = std::sqrt(-2.0 * std::log(u1));
        const real a = 2.0 * std::numbers::pi_v<real> * u2;
        data[i] += sigma * r * std::cos(a);
        if (i + 1 < data.size()) data[i + 1] += sigma * r * std::sin(a);
    }
    return y;
}

Tensor apply_forward_model(const Tensor& x, const DegradationSpec& spec) {
    spec.validate();
    if (spec.kind == TaskKind::Denoise)
        return add_gaussian_noise(x, spec.sigma, spec.seed);
    if (x.h() % spec.scale != 0 || x.w() % spec.scale != 0)
        throw PreconditionError("image dims must be divisible by the SR scale");
    return bicubic_resample(x, spec.scale, ResampleDir::Down);
}

Kernel make_kernel(KernelKind kind, real sigma_b, int size, int scale, int channels) {
    switch (kind) {
        case KernelKind::Delta: {
            Tensor taps(channels, channels, 1, 1);
            for (int c = 0; c < channels; ++c) taps.at(c, c, 0, 0) = 1.0;
            return Kernel(std::move(taps));
        }
        case KernelKind::Gaussian: {
            if (size < 1 || size % 2 == 0) throw PreconditionError("gaussian kernel size must be odd");
            if (sigma_b <= 0) throw PreconditionError("gaussian kernel needs sigma_b > 0");
            const int r = size / 2;
            std::vector<real> prof(size);
            real sum1d = 0;
            for (int u = -r; u <= r; ++u) {
                prof[u + r] = std::exp(-0.5 * u * u / (sigma_b * sigma_b));
                sum1d += prof[u + r];
            }
            Tensor taps(channels, channels, size, size);
            for (int c = 0; c < channels; ++c)
                for (int u = 0; u < size; ++u)
                    for (int v = 0; v < size; ++v)
                        taps.at(c, c, u, v) = prof[u] * prof[v] / (sum1d * sum1d);
            return Kernel(std::move(taps));
        }
        case KernelKind::BicubicLowpass: {
            if (scale != 2 && scale != 3 && scale != 4)
                throw PreconditionError("bicubic lowpass scale must be 2, 3 or 4");
            // Separable antialias kernel: cubic stretched by the scale,
            // support 2*scale on each side, normalized to sum 1.
            const int r = 2 * scale - 1;
            const int size1 = 2 * r + 1;
            std::vector<real> prof(size1);
            real sum1d = 0;
            for (int u = -r; u <= r; ++u) {
                prof[u + r] = bicubic_weight(static_cast<real>(u) / scale);
                sum1d += prof[u + r];
            }
            Tensor taps(channels, channels, size1, size1);
            for (int c = 0; c < channels; ++c)
                for (int u = 0; u < size1; ++u)
                    for (int v = 0; v < size1; ++v)
                        taps.at(c, c, u, v) = prof[u] * prof[v] / (sum1d * sum1d);
            return Kernel(std::move(taps));
        }
    }
    throw ConfigError("unknown kernel kind");
}

}  // namespace psn
