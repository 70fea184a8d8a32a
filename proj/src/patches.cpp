#include "psn/patches.hpp"

#include <algorithm>
#include <iostream>
#include <random>

#include "psn/image_io.hpp"

namespace psn {

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

namespace {

Tensor crop(const Tensor& img, int top, int left, int size) {
    Tensor out(1, img.c(), size, size);
    for (int c = 0; c < img.c(); ++c)
        for (int i = 0; i < size; ++i) {
            const real* src = img.row(0, c, top + i) + left;
            real* dst = out.row(0, c, i);
            std::copy(src, src + size, dst);
        }
    return out;
}

Tensor flip_h(const Tensor& p) {
    Tensor out = Tensor::zeros_like(p);
    for (int c = 0; c < p.c(); ++c)
        for (int i = 0; i < p.h(); ++i) {
            const real* src = p.row(0, c, i);
            real* dst = out.row(0, c, i);
            for (int j = 0; j < p.w(); ++j) dst[j] = src[p.w() - 1 - j];
        }
    return out;
}

Tensor rot90(const Tensor& p) {
    Tensor out(1, p.c(), p.w(), p.h());
    for (int c = 0; c < p.c(); ++c)
        for (int i = 0; i < p.h(); ++i)
            for (int j = 0; j < p.w(); ++j)
                out.at(0, c, j, p.h() - 1 - i) = p.at(0, c, i, j);
    return out;
}

}  // namespace

std::vector<Tensor> sample_patches_from(const std::vector<Tensor>& images, int patch_size,
                                        int samples_per_image, std::uint64_t seed, bool augment) {
    std::vector<Tensor> patches;
    std::mt19937_64 rng(seed);
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
        const Tensor& img = images[idx];
        if (img.h() < patch_size || img.w() < patch_size) {
            std::cerr << "warning: image " << idx << " (" << img.shape_str()
                      << ") smaller than patch size " << patch_size << ", skipping\n";
            continue;
        }
        std::uniform_int_distribution<int> top_dist(0, img.h() - patch_size);
        std::uniform_int_distribution<int> left_dist(0, img.w() - patch_size);
        std::uniform_int_distribution<int> aug_dist(0, 7);
        for (int s = 0; s < samples_per_image; ++s) {
            Tensor p = crop(img, top_dist(rng), left_dist(rng), patch_size);
            if (augment) {
                const int a = aug_dist(rng);
                if (a & 1) p = flip_h(p);
                for (int r = 0; r < (a >> 1); ++r) p = rot90(p);
            }
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

std::vector<Tensor> sample_patches(const PatchSource& src) {
    std::vector<Tensor> images;
    for (const auto& path : list_images(src.directory)) images.push_back(read_image(path));
    return sample_patches_from(images, src.patch_size, src.samples_per_image, src.seed, src.augment);
}

}  // namespace psn
