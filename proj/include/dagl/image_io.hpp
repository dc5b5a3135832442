#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dagl/tensor.hpp"

namespace dagl {

/// 8-bit interleaved image, 1 (P5) or 3 (P6) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary PGM (P5) or PPM (P6) with maxval 255. Comments in the header
/// are skipped.
Image read_pnm(const std::filesystem::path& path);
/// Writes "P5\n<w> <h>\n255\n" (or P6) followed by the raw payload.
void write_pnm(const std::filesystem::path& path, const Image& img);

/// [C x H x W] in [0, 1].
Tensor image_to_tensor(const Image& img);
/// Clamps to [0, 1] and rounds to the nearest 8-bit level.
Image tensor_to_image(const Tensor& t);

/// Every .pgm/.ppm directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace dagl
