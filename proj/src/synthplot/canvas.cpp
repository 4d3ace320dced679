#include "plotadapter/synthplot/canvas.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pa::synth {

Canvas::Canvas(std::size_t width, std::size_t height, std::size_t supersample)
    : width_(width), height_(height), ss_(supersample), buf_(width * height * supersample * supersample * 3, 1.0) {
  if (width == 0 || height == 0 || supersample == 0) throw std::invalid_argument("canvas extents must be positive");
}

void Canvas::blend(std::size_t sx, std::size_t sy, Color c, double alpha) {
  double* p = &buf_[(sy * width_ * ss_ + sx) * 3];
  p[0] += alpha * (c.r - p[0]);
  p[1] += alpha * (c.g - p[1]);
  p[2] += alpha * (c.b - p[2]);
}

void Canvas::fill_polygon(const std::vector<Point>& outline, Color color, double alpha) {
  if (outline.size() < 3) return;
  const double s = static_cast<double>(ss_);
  const long rows = static_cast<long>(height_ * ss_), cols = static_cast<long>(width_ * ss_);
  double ymin = outline[0].y, ymax = ymin;
  for (const auto& p : outline) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const long r0 = std::max(0L, static_cast<long>(std::floor(ymin * s))),
             r1 = std::min(rows - 1, static_cast<long>(std::ceil(ymax * s)));
  std::vector<double> xs;
  for (long r = r0; r <= r1; ++r) {
    const double y = (static_cast<double>(r) + 0.5) / s;
    xs.clear();
    for (std::size_t i = 0; i < outline.size(); ++i) {
      const Point a = outline[i], b = outline[(i + 1) % outline.size()];
      if ((a.y <= y) == (b.y <= y)) continue;
      xs.push_back(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const long c0 = std::max(0L, static_cast<long>(std::ceil(xs[k] * s - 0.5)));
      const long c1 = std::min(cols - 1, static_cast<long>(std::floor(xs[k + 1] * s - 0.5)));
      for (long c = c0; c <= c1; ++c) blend(static_cast<std::size_t>(c), static_cast<std::size_t>(r), color, alpha);
    }
  }
}

void Canvas::stroke(const std::vector<Point>& path, const std::vector<double>& widths, Color color) {
  if (path.empty()) return;
  if (widths.size() != path.size()) throw std::invalid_argument("stroke: one width per vertex required");
  if (path.size() == 1) {
    fill_circle(path[0], widths[0] / 2, color);
    return;
  }
  const double s = static_cast<double>(ss_);
  const long rows = static_cast<long>(height_ * ss_), cols = static_cast<long>(width_ * ss_);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Point a = path[i], b = path[i + 1];
    const double ha = widths[i] / 2, hb = widths[i + 1] / 2, hmax = std::max(ha, hb);
    const long c0 = std::max(0L, static_cast<long>(std::floor((std::min(a.x, b.x) - hmax) * s)));
    const long c1 = std::min(cols - 1, static_cast<long>(std::ceil((std::max(a.x, b.x) + hmax) * s)));
    const long r0 = std::max(0L, static_cast<long>(std::floor((std::min(a.y, b.y) - hmax) * s)));
    const long r1 = std::min(rows - 1, static_cast<long>(std::ceil((std::max(a.y, b.y) + hmax) * s)));
    const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
    for (long r = r0; r <= r1; ++r) {
      const double py = (static_cast<double>(r) + 0.5) / s;
      for (long c = c0; c <= c1; ++c) {
        const double px = (static_cast<double>(c) + 0.5) / s;
        double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
        const double h = ha + t * (hb - ha);
        if (qx * qx + qy * qy <= h * h) blend(static_cast<std::size_t>(c), static_cast<std::size_t>(r), color, 1.0);
      }
    }
  }
}

void Canvas::stroke(const std::vector<Point>& path, double width, Color color) {
  stroke(path, std::vector<double>(path.size(), width), color);
}

void Canvas::fill_circle(Point center, double radius, Color color) {
  const double s = static_cast<double>(ss_);
  const long rows = static_cast<long>(height_ * ss_), cols = static_cast<long>(width_ * ss_);
  const long c0 = std::max(0L, static_cast<long>(std::floor((center.x - radius) * s)));
  const long c1 = std::min(cols - 1, static_cast<long>(std::ceil((center.x + radius) * s)));
  const long r0 = std::max(0L, static_cast<long>(std::floor((center.y - radius) * s)));
  const long r1 = std::min(rows - 1, static_cast<long>(std::ceil((center.y + radius) * s)));
  for (long r = r0; r <= r1; ++r) {
    const double dy = (static_cast<double>(r) + 0.5) / s - center.y;
    for (long c = c0; c <= c1; ++c) {
      const double dx = (static_cast<double>(c) + 0.5) / s - center.x;
      if (dx * dx + dy * dy <= radius * radius)
        blend(static_cast<std::size_t>(c), static_cast<std::size_t>(r), color, 1.0);
    }
  }
}

RgbImage Canvas::resolve() const {
  RgbImage out(width_, height_);
  const double norm = 1.0 / static_cast<double>(ss_ * ss_);
  for (std::size_t y = 0; y < height_; ++y)
    for (std::size_t x = 0; x < width_; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0;
        for (std::size_t j = 0; j < ss_; ++j)
          for (std::size_t i = 0; i < ss_; ++i) acc += buf_[(((y * ss_ + j) * width_ * ss_) + x * ss_ + i) * 3 + ch];
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(acc * norm, 0.0, 1.0) * 255.0));
      }
  return out;
}

std::vector<std::vector<Point>> dash(const std::vector<Point>& path, double on, double off) {
  if (!(on > 0 && off >= 0)) throw std::invalid_argument("dash lengths must be positive");
  std::vector<std::vector<Point>> out;
  if (path.size() < 2) return out;
  bool drawing = true;
  double left = on;
  std::vector<Point> cur{path[0]};
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    Point a = path[i];
    const Point b = path[i + 1];
    double seg = std::hypot(b.x - a.x, b.y - a.y);
    while (seg > left) {
      const double t = left / seg;
      a = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
      seg -= left;
      if (drawing) {
        cur.push_back(a);
        out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur = {a};
      }
      drawing = !drawing;
      left = drawing ? on : off;
      if (left <= 0) {
        drawing = true;
        left = on;
        cur = {a};
      }
    }
    left -= seg;
    if (drawing) cur.push_back(b);
  }
  if (drawing && cur.size() >= 2) out.push_back(std::move(cur));
  return out;
}

}  // namespace pa::synth
