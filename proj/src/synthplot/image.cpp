#include "plotadapter/synthplot/image.hpp"

#include <png.h>

#include <cstring>
#include <string>

#include "plotadapter/backbone/checkpoint.hpp"

namespace pa::synth {

namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
};

std::string message(const PngImage& p) { return p.image.message; }

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3)
    throw ImageError("write_png: malformed image");
  PngImage p;
  p.image.width = static_cast<png_uint_32>(img.width);
  p.image.height = static_cast<png_uint_32>(img.height);
  p.image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p.image, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw ImageError("write_png: " + message(p));
  std::vector<std::byte> buffer(size);
  if (!png_image_write_to_memory(&p.image, buffer.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw ImageError("write_png: " + message(p));
  buffer.resize(size);
  try {
    vit::write_bytes(path, buffer);
  } catch (const std::exception& e) {
    throw ImageError(std::string("write_png: ") + e.what());
  }
}

RgbImage read_png(const std::filesystem::path& path) {
  PngImage p;
  if (!png_image_begin_read_from_file(&p.image, path.c_str()))
    throw ImageError("cannot read image " + path.string() + ": " + message(p));
  p.image.format = PNG_FORMAT_RGB;
  RgbImage img;
  img.width = p.image.width;
  img.height = p.image.height;
  img.pixels.resize(PNG_IMAGE_SIZE(p.image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&p.image, &white, img.pixels.data(), 0, nullptr))
    throw ImageError("cannot decode image " + path.string() + ": " + message(p));
  return img;
}

std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path) {
  PngImage p;
  if (!png_image_begin_read_from_file(&p.image, path.c_str()))
    throw ImageError("cannot read image " + path.string() + ": " + message(p));
  return {p.image.width, p.image.height};
}

}  // namespace pa::synth
