#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "psn/tensor.hpp"

namespace psn {

struct PatchSource {
    std::filesystem::path directory;
    int patch_size = 32;
    int samples_per_image = 100;
    std::uint64_t seed = 0;
    bool augment = false;  // random horizontal flips and 90-degree rotations
};

// Sorted directory scan for .pgm/.ppm files.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Deterministic stream of clean patches; images smaller than the patch
// size are skipped with a warning on stderr.
std::vector<Tensor> sample_patches(const PatchSource& src);

std::vector<Tensor> sample_patches_from(const std::vector<Tensor>& images, int patch_size,
                                        int samples_per_image, std::uint64_t seed, bool augment);

}  // namespace psn
