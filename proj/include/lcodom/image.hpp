#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lcodom/tensor.hpp"

namespace lcodom {

inline constexpr std::size_t kImageWidth = 416;
inline constexpr std::size_t kImageHeight = 128;

/// 8-bit image, row-major, channels interleaved.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels[(row * width + col) * channels + ch];
  }
  std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * width + col) * channels + ch];
  }
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Bilinear resize (pixel centers aligned, edges clamped) to width x height,
/// channels first, value = pixel / 255 - 0.5. Throws on non-3-channel input.
Tensor32 preprocess_image(const RgbImage& image, std::size_t width = kImageWidth, std::size_t height = kImageHeight);

/// Channels 0-2 = previous frame, 3-5 = current frame.
Tensor32 stack_images(const Tensor32& prev, const Tensor32& curr);

}  // namespace lcodom
