#pragma once

#include <filesystem>
#include <string>

#include "psn/tensor.hpp"

namespace psn {

struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Binary PGM (P5) / PPM (P6), 8-bit, values mapped to [0,1] as v/255.
Tensor read_image(const std::filesystem::path& path);

// Clips to [0,1], scales by 255, rounds half-up.
void write_image(const Tensor& img, const std::filesystem::path& path);

}  // namespace psn
