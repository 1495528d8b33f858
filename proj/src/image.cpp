#include "lcodom/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lcodom {

RgbImage read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ImageError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  RgbImage image;
  image.width = png.width;
  image.height = png.height;
  image.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageError(path.string() + ": " + msg);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.channels != 3 && image.channels != 1) throw ImageError("write_png supports 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw ImageError("pixel buffer does not match image dimensions");
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw ImageError(path.string() + ": " + png.message);
  }
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Source sample positions for each output index: src = (dst + 0.5) * in / out - 0.5.
std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return t;
}

}  // namespace

Tensor32 preprocess_image(const RgbImage& image, std::size_t width, std::size_t height) {
  if (image.channels != 3) {
    throw ImageError("expected a 3-channel image, got " + std::to_string(image.channels) + " channels");
  }
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
    throw ImageError("image buffer does not match its dimensions");
  }
  if (width == 0 || height == 0) throw std::invalid_argument("output size must be positive");
  const auto xs = taps(image.width, width);
  const auto ys = taps(image.height, height);
  Tensor32 out({3, height, width});
  float* dst = out.data();
#pragma omp parallel for schedule(static) if (height * width > 4096)
  for (std::size_t r = 0; r < height; ++r) {
    const auto& ty = ys[r];
    for (std::size_t c = 0; c < width; ++c) {
      const auto& tx = xs[c];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = image.at(ty.lo, tx.lo, ch) * (1.0 - tx.frac) + image.at(ty.lo, tx.hi, ch) * tx.frac;
        const double bottom = image.at(ty.hi, tx.lo, ch) * (1.0 - tx.frac) + image.at(ty.hi, tx.hi, ch) * tx.frac;
        const double v = top * (1.0 - ty.frac) + bottom * ty.frac;
        dst[(ch * height + r) * width + c] = static_cast<float>(v / 255.0 - 0.5);
      }
    }
  }
  return out;
}

Tensor32 stack_images(const Tensor32& prev, const Tensor32& curr) {
  if (prev.rank() != 3 || prev.dim(0) != 3) throw ShapeError("image tensor must be [3, H, W], got " + to_string(prev.shape()));
  if (curr.shape() != prev.shape()) {
    throw ShapeError("image tensors differ: " + to_string(prev.shape()) + " vs " + to_string(curr.shape()));
  }
  Tensor32 out({6, prev.dim(1), prev.dim(2)});
  std::copy(prev.values().begin(), prev.values().end(), out.data());
  std::copy(curr.values().begin(), curr.values().end(), out.data() + prev.size());
  return out;
}

}  // namespace lcodom
