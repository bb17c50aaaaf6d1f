#pragma once

#include "ctcn/image.hpp"
#include "ctcn/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace ctcn {

/// Grayscale disk on a dark noisy background. Label 1 draws a large disk,
/// label 0 a small one; radius, center, contrast and noise are random.
Image blob_image(int label, std::size_t size, Rng& rng);

/// Writes root/hem/*.png (label 0) and root/all/*.png (label 1). Image k of
/// label l uses Rng(seed).derive("blob", 2k + l).
void write_blob_dataset(const std::filesystem::path& root, std::size_t count0, std::size_t count1, std::uint64_t seed,
                        std::size_t size = 32);

}  // namespace ctcn
