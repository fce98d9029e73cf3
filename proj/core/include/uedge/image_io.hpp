#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "uedge/engine.hpp"

namespace uedge {

// Binary 8-bit RGB pixmap (P6) -> (1, H, W, 3) tensor scaled by 1/255.
Tensor read_image(const std::filesystem::path& path);
// Same, additionally requiring the image to match a model input size.
Tensor read_image(const std::filesystem::path& path, const InputSize& expected);
// Values are clamped to [0, 1] and rounded to the nearest 8-bit level.
void write_image(const std::filesystem::path& path, const Tensor& image);

// Binary 8-bit graymap (P5): nonzero pixels read as 1; written as {0, 255}.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace uedge
