#pragma once

#include <cstddef>
#include <vector>

#include "plotadapter/synthplot/image.hpp"

namespace pa::synth {

struct Point {
  double x = 0;
  double y = 0;
};

struct Color {
  double r = 0, g = 0, b = 0;  // [0,1]
};

inline constexpr Color kBlack{0.1, 0.1, 0.1};
inline constexpr Color kWhite{1, 1, 1};
inline constexpr Color kGray{0.75, 0.75, 0.75};

/// Supersampled RGB raster. Coordinates are output pixels, y down; the
/// pixel (i,j) covers [i,i+1)x[j,j+1).
class Canvas {
 public:
  Canvas(std::size_t width, std::size_t height, std::size_t supersample = 4);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  void fill_polygon(const std::vector<Point>& outline, Color color, double alpha = 1.0);
  /// Stroke with one width per vertex, linearly interpolated along segments.
  void stroke(const std::vector<Point>& path, const std::vector<double>& widths, Color color);
  void stroke(const std::vector<Point>& path, double width, Color color);
  void fill_circle(Point center, double radius, Color color);

  /// Box-filters the supersampled buffer and quantizes to 8 bits.
  RgbImage resolve() const;

 private:
  void blend(std::size_t sx, std::size_t sy, Color c, double alpha);

  std::size_t width_, height_, ss_;
  std::vector<double> buf_;  // (height*ss) x (width*ss) x 3
};

/// Splits a path into dashes of the given on/off lengths (pixels).
std::vector<std::vector<Point>> dash(const std::vector<Point>& path, double on, double off);

}  // namespace pa::synth
