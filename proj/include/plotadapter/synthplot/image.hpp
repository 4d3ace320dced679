#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace pa::synth {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB raster, row-major, top row first.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 255) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const RgbImage&) const = default;
};

/// Writes an 8-bit RGB PNG. Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Reads any PNG and converts it to 8-bit RGB. Throws ImageError.
RgbImage read_png(const std::filesystem::path& path);
/// Reads only the header. Throws ImageError.
std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path);

}  // namespace pa::synth
