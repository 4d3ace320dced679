#include "plotadapter/synthplot/render.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <stdexcept>

#include "plotadapter/numerics/rng.hpp"
#include "plotadapter/synthplot/canvas.hpp"

namespace pa::synth {

namespace {

using num::Rng;
constexpr double kPi = std::numbers::pi;

constexpr Color kPalette[] = {{0.12, 0.47, 0.71}, {1.00, 0.50, 0.05}, {0.17, 0.63, 0.17}, {0.84, 0.15, 0.16},
                              {0.58, 0.40, 0.74}, {0.55, 0.34, 0.29}, {0.89, 0.47, 0.76}, {0.50, 0.50, 0.50},
                              {0.74, 0.74, 0.13}, {0.09, 0.75, 0.81}};

Color pick(Rng& rng) { return kPalette[rng.below(std::size(kPalette))]; }

// Pixel-space transform of the plot area plus the domain's stroke style.
class Painter {
 public:
  Painter(Canvas& canvas, Domain domain, Rng& style, bool square)
      : canvas_(canvas), hand_(domain == Domain::hand_drawn), style_(style) {
    const double w = static_cast<double>(canvas.width()), h = static_cast<double>(canvas.height());
    unit_ = w / 64.0;
    if (square) {
      const double side = 0.84 * std::min(w, h);
      x0_ = (w - side) / 2;
      y0_ = (h - side) / 2;
      x1_ = x0_ + side;
      y1_ = y0_ + side;
    } else {
      x0_ = 0.15 * w;
      x1_ = 0.95 * w;
      y0_ = 0.06 * h;
      y1_ = 0.85 * h;
    }
    cx_ = w / 2;
    cy_ = h / 2;
    if (hand_) {
      const double angle = style_.uniform(-0.05, 0.05), shear = style_.uniform(-0.06, 0.06);
      a_ = std::cos(angle);
      b_ = -std::sin(angle) + shear;
      c_ = std::sin(angle);
      d_ = std::cos(angle);
    }
  }

  double unit() const { return unit_; }
  bool hand() const { return hand_; }

  Point to_pixels(Point uv) const {
    const double px = x0_ + uv.x * (x1_ - x0_) - cx_, py = y1_ - uv.y * (y1_ - y0_) - cy_;
    return {cx_ + a_ * px + b_ * py, cy_ + c_ * px + d_ * py};
  }

  void line(const std::vector<Point>& uv, Color color, double width, bool dashed = false) {
    auto px = map(uv);
    if (dashed) {
      for (auto& piece : dash(px, 3.0 * unit_, 2.0 * unit_)) draw(piece, color, width);
    } else {
      draw(px, color, width);
    }
  }

  void area(const std::vector<Point>& uv, Color fill, double alpha, bool outline) {
    auto px = map(uv);
    if (hand_) px = wobble(densify(close(px)), 0.6);
    canvas_.fill_polygon(px, fill, alpha);
    if (outline) draw(close(map(uv)), shade(fill), 0.6);
  }

  void rect(double u0, double v0, double u1, double v1, Color fill, double alpha, bool outline) {
    area({{u0, v0}, {u1, v0}, {u1, v1}, {u0, v1}}, fill, alpha, outline);
  }

  void marker(Point uv, double radius, Color color) {
    Point p = to_pixels(uv);
    double r = radius * unit_;
    if (hand_) {
      p.x += style_.uniform(-0.4, 0.4) * unit_;
      p.y += style_.uniform(-0.4, 0.4) * unit_;
      r *= style_.uniform(0.8, 1.3);
    }
    canvas_.fill_circle(p, r, color);
  }

 private:
  static Color shade(Color c) { return {c.r * 0.6, c.g * 0.6, c.b * 0.6}; }

  static std::vector<Point> close(std::vector<Point> p) {
    if (!p.empty()) p.push_back(p.front());
    return p;
  }

  std::vector<Point> map(const std::vector<Point>& uv) const {
    std::vector<Point> out;
    out.reserve(uv.size());
    for (const auto& p : uv) out.push_back(to_pixels(p));
    return out;
  }

  std::vector<Point> densify(const std::vector<Point>& p) const {
    if (p.size() < 2) return p;
    std::vector<Point> out{p[0]};
    const double step = 1.5 * unit_;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const double len = std::hypot(p[i + 1].x - p[i].x, p[i + 1].y - p[i].y);
      const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
      for (int k = 1; k <= n; ++k) {
        const double t = static_cast<double>(k) / n;
        out.push_back({p[i].x + t * (p[i + 1].x - p[i].x), p[i].y + t * (p[i + 1].y - p[i].y)});
      }
    }
    return out;
  }

  // Low-frequency sinusoidal displacement along the path normal.
  std::vector<Point> wobble(const std::vector<Point>& p, double amplitude) {
    const double l1 = style_.uniform(20, 40) * unit_, l2 = style_.uniform(7, 12) * unit_;
    const double f1 = style_.uniform(0, 2 * kPi), f2 = style_.uniform(0, 2 * kPi);
    const double amp = amplitude * unit_ * style_.uniform(0.6, 1.4);
    std::vector<Point> out(p.size());
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i > 0) s += std::hypot(p[i].x - p[i - 1].x, p[i].y - p[i - 1].y);
      const Point a = p[i == 0 ? 0 : i - 1], b = p[std::min(i + 1, p.size() - 1)];
      double nx = -(b.y - a.y), ny = b.x - a.x;
      const double len = std::hypot(nx, ny);
      if (len > 0) {
        nx /= len;
        ny /= len;
      }
      const double d = amp * (0.7 * std::sin(2 * kPi * s / l1 + f1) + 0.3 * std::sin(2 * kPi * s / l2 + f2));
      out[i] = {p[i].x + d * nx, p[i].y + d * ny};
    }
    return out;
  }

  void draw(const std::vector<Point>& px, Color color, double width) {
    if (!hand_) {
      canvas_.stroke(px, width * unit_, color);
      return;
    }
    auto path = wobble(densify(px), 0.8);
    const double base = width * unit_ * style_.uniform(0.8, 1.6), period = style_.uniform(10, 25) * unit_,
                 phase = style_.uniform(0, 2 * kPi);
    std::vector<double> widths(path.size());
    double s = 0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i > 0) s += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
      widths[i] = base * (1.0 + 0.4 * std::sin(2 * kPi * s / period + phase));
    }
    canvas_.stroke(path, widths, color);
  }

  Canvas& canvas_;
  bool hand_;
  Rng& style_;
  double unit_ = 1;
  double x0_ = 0, y0_ = 0, x1_ = 0, y1_ = 0, cx_ = 0, cy_ = 0;
  double a_ = 1, b_ = 0, c_ = 0, d_ = 1;
};

struct Ctx {
  Painter& p;
  Rng& rng;
  double alpha;  // fill opacity, lowered when classes overlap
};

std::vector<Point> smooth_series(Rng& rng, std::size_t n, double lo, double hi) {
  const double a1 = rng.uniform(0.5, 2.5), a2 = rng.uniform(2.0, 5.0), p1 = rng.uniform(0, 2 * kPi),
               p2 = rng.uniform(0, 2 * kPi), w = rng.uniform(0.3, 0.7);
  std::vector<Point> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double v = w * std::sin(2 * kPi * a1 * u + p1) + (1 - w) * std::sin(2 * kPi * a2 * u + p2);
    out.push_back({0.04 + 0.92 * u, lo + (hi - lo) * (0.5 + 0.5 * v)});
  }
  return out;
}

void draw_bar(Ctx& c) {
  const std::size_t n = 3 + c.rng.below(5);
  const Color color = pick(c.rng);
  const double slot = 0.92 / static_cast<double>(n), width = slot * c.rng.uniform(0.5, 0.8);
  for (std::size_t i = 0; i < n; ++i) {
    const double mid = 0.04 + slot * (static_cast<double>(i) + 0.5);
    c.p.rect(mid - width / 2, 0.0, mid + width / 2, c.rng.uniform(0.2, 0.95), color, c.alpha, false);
  }
}

void draw_barh(Ctx& c) {
  const std::size_t n = 3 + c.rng.below(5);
  const Color color = pick(c.rng);
  const double slot = 0.92 / static_cast<double>(n), height = slot * c.rng.uniform(0.5, 0.8);
  for (std::size_t i = 0; i < n; ++i) {
    const double mid = 0.04 + slot * (static_cast<double>(i) + 0.5);
    c.p.rect(0.0, mid - height / 2, c.rng.uniform(0.2, 0.95), mid + height / 2, color, c.alpha, false);
  }
}

void draw_hist(Ctx& c) {
  const std::size_t n = 8 + c.rng.below(7);
  const Color color = pick(c.rng);
  const double centre = c.rng.uniform(0.3, 0.7) * static_cast<double>(n), spread = c.rng.uniform(0.18, 0.3) * n;
  const double peak = c.rng.uniform(0.7, 0.95), bin = 0.92 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (static_cast<double>(i) + 0.5 - centre) / spread;
    const double h = std::max(0.03, peak * std::exp(-z * z) + c.rng.uniform(-0.05, 0.05));
    c.p.rect(0.04 + bin * i, 0.0, 0.04 + bin * (i + 1), h, color, c.alpha, true);
  }
}

void draw_boxplot(Ctx& c) {
  const std::size_t n = 2 + c.rng.below(3);
  const Color edge = c.rng.bernoulli(0.5) ? kBlack : pick(c.rng);
  const Color median = kPalette[1];
  const double slot = 0.92 / static_cast<double>(n), half = slot * 0.22;
  for (std::size_t i = 0; i < n; ++i) {
    const double mid = 0.04 + slot * (static_cast<double>(i) + 0.5);
    const double q1 = c.rng.uniform(0.25, 0.45), q3 = q1 + c.rng.uniform(0.15, 0.3);
    const double med = c.rng.uniform(q1 + 0.03, q3 - 0.03);
    const double lo = q1 - c.rng.uniform(0.08, 0.2), hi = q3 + c.rng.uniform(0.08, 0.2);
    c.p.line({{mid - half, q1}, {mid + half, q1}, {mid + half, q3}, {mid - half, q3}, {mid - half, q1}}, edge, 1.0);
    c.p.line({{mid - half, med}, {mid + half, med}}, median, 1.2);
    c.p.line({{mid, lo}, {mid, q1}}, edge, 0.9);
    c.p.line({{mid, q3}, {mid, hi}}, edge, 0.9);
    c.p.line({{mid - half / 2, lo}, {mid + half / 2, lo}}, edge, 0.9);
    c.p.line({{mid - half / 2, hi}, {mid + half / 2, hi}}, edge, 0.9);
  }
}

void draw_broken_barh(Ctx& c) {
  const std::size_t rows = 2 + c.rng.below(2);
  const Color color = pick(c.rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const double mid = 0.2 + 0.6 * static_cast<double>(r) / static_cast<double>(rows - 1);
    const double half = 0.06;
    double u = c.rng.uniform(0.03, 0.15);
    const std::size_t segs = 2 + c.rng.below(2);
    for (std::size_t s = 0; s < segs && u < 0.9; ++s) {
      const double end = std::min(0.96, u + c.rng.uniform(0.12, 0.28));
      c.p.rect(u, mid - half, end, mid + half, color, c.alpha, false);
      u = end + c.rng.uniform(0.06, 0.15);
    }
  }
}

void draw_errorbar(Ctx& c) {
  const std::size_t n = 5 + c.rng.below(4);
  const Color color = pick(c.rng);
  const double slope = c.rng.uniform(-0.4, 0.4), base = c.rng.uniform(0.35, 0.65);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 0.08 + 0.84 * static_cast<double>(i) / static_cast<double>(n - 1);
    pts.push_back({u, std::clamp(base + slope * (u - 0.5) + c.rng.uniform(-0.08, 0.08), 0.2, 0.8)});
  }
  c.p.line(pts, color, 0.8);
  for (const auto& q : pts) {
    const double e = c.rng.uniform(0.06, 0.15), cap = 0.018;
    c.p.line({{q.x, q.y - e}, {q.x, q.y + e}}, color, 0.9);
    c.p.line({{q.x - cap, q.y - e}, {q.x + cap, q.y - e}}, color, 0.9);
    c.p.line({{q.x - cap, q.y + e}, {q.x + cap, q.y + e}}, color, 0.9);
    c.p.marker(q, 1.3, color);
  }
}

void draw_pie(Ctx& c) {
  const std::size_t k = 3 + c.rng.below(4);
  std::vector<double> share(k);
  double total = 0;
  for (auto& s : share) total += (s = c.rng.uniform(0.5, 2.0));
  double angle = c.rng.uniform(0, 2 * kPi);
  const std::size_t offset = c.rng.below(std::size(kPalette));
  for (std::size_t i = 0; i < k; ++i) {
    const double sweep = 2 * kPi * share[i] / total;
    std::vector<Point> wedge{{0.5, 0.5}};
    const int steps = std::max(2, static_cast<int>(sweep * 12));
    for (int s = 0; s <= steps; ++s) {
      const double a = angle + sweep * s / steps;
      wedge.push_back({0.5 + 0.5 * std::cos(a), 0.5 + 0.5 * std::sin(a)});
    }
    c.p.area(wedge, kPalette[(offset + i) % std::size(kPalette)], 1.0, false);
    c.p.line({{0.5, 0.5}, wedge[1]}, kWhite, 0.8);
    angle += sweep;
  }
}

std::vector<Point> circle(double r, int steps = 64) {
  std::vector<Point> out;
  for (int s = 0; s <= steps; ++s) {
    const double a = 2 * kPi * s / steps;
    out.push_back({0.5 + r * std::cos(a), 0.5 + r * std::sin(a)});
  }
  return out;
}

void draw_polar(Ctx& c) {
  for (double r : {1.0 / 6, 2.0 / 6}) c.p.line(circle(r), kGray, 0.6);
  for (int k = 0; k < 8; ++k) {
    const double a = kPi * k / 4;
    c.p.line({{0.5, 0.5}, {0.5 + 0.5 * std::cos(a), 0.5 + 0.5 * std::sin(a)}}, kGray, 0.6);
  }
  c.p.line(circle(0.5), kBlack, 0.9);
  const Color color = pick(c.rng);
  const double petals = static_cast<double>(2 + c.rng.below(4)), phase = c.rng.uniform(0, 2 * kPi);
  const double base = c.rng.uniform(0.15, 0.25), amp = c.rng.uniform(0.15, 0.23);
  std::vector<Point> curve;
  for (int s = 0; s <= 160; ++s) {
    const double a = 2 * kPi * s / 160, r = base + amp * std::sin(petals * a + phase);
    curve.push_back({0.5 + r * std::cos(a), 0.5 + r * std::sin(a)});
  }
  c.p.line(curve, color, 1.4);
}

void draw_plot(Ctx& c) {
  const std::size_t lines = 1 + c.rng.below(2);
  for (std::size_t i = 0; i < lines; ++i) {
    const Color color = pick(c.rng);
    c.p.line(smooth_series(c.rng, 48, 0.1, 0.9), color, 1.5, c.rng.bernoulli(0.25));
  }
}

void draw_scatter(Ctx& c) {
  const std::size_t n = 15 + c.rng.below(16);
  const Color color = pick(c.rng);
  const double slope = c.rng.uniform(-0.6, 0.6);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = c.rng.uniform(0.05, 0.95);
    const double v = std::clamp(0.5 + slope * (u - 0.5) + c.rng.uniform(-0.25, 0.25), 0.05, 0.95);
    c.p.marker({u, v}, 1.4, color);
  }
}

void draw_stackplot(Ctx& c) {
  const std::size_t layers = 2 + c.rng.below(2), n = 32;
  std::vector<double> floor_(n, 0.0);
  const std::size_t offset = c.rng.below(std::size(kPalette));
  for (std::size_t l = 0; l < layers; ++l) {
    auto series = smooth_series(c.rng, n, 0.08, 0.9 / static_cast<double>(layers));
    std::vector<Point> poly;
    for (std::size_t i = 0; i < n; ++i) poly.push_back({series[i].x, floor_[i] + series[i].y});
    for (std::size_t i = n; i-- > 0;) poly.push_back({series[i].x, floor_[i]});
    for (std::size_t i = 0; i < n; ++i) floor_[i] += series[i].y;
    c.p.area(poly, kPalette[(offset + l) % std::size(kPalette)], c.alpha, false);
  }
}

void draw_stem(Ctx& c) {
  const std::size_t n = 8 + c.rng.below(7);
  const Color color = pick(c.rng);
  const double base = c.rng.uniform(0.05, 0.25);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 0.06 + 0.88 * static_cast<double>(i) / static_cast<double>(n - 1);
    const double v = c.rng.uniform(base + 0.1, 0.92);
    c.p.line({{u, base}, {u, v}}, color, 0.9);
    c.p.marker({u, v}, 1.5, color);
  }
  c.p.line({{0.03, base}, {0.97, base}}, kPalette[3], 1.0);
}

void draw_step(Ctx& c) {
  const std::size_t n = 6 + c.rng.below(5);
  const Color color = pick(c.rng);
  std::vector<Point> pts;
  double v = c.rng.uniform(0.2, 0.8);
  for (std::size_t i = 0; i < n; ++i) {
    const double u0 = 0.04 + 0.92 * static_cast<double>(i) / n, u1 = 0.04 + 0.92 * static_cast<double>(i + 1) / n;
    pts.push_back({u0, v});
    pts.push_back({u1, v});
    v = std::clamp(v + c.rng.uniform(-0.3, 0.3), 0.08, 0.92);
  }
  c.p.line(pts, color, 1.4);
}

struct ClassInfo {
  const char* name;
  void (*draw)(Ctx&);
  int layer;  // drawn in ascending order
  bool exclusive;
};

// python-13 order.
constexpr ClassInfo kClasses[] = {
    {"bar", draw_bar, 0, false},          {"barh", draw_barh, 0, false},
    {"boxplot", draw_boxplot, 1, false},  {"broken_barh", draw_broken_barh, 0, false},
    {"errorbar", draw_errorbar, 2, false}, {"hist", draw_hist, 0, false},
    {"pie", draw_pie, 0, true},           {"plot", draw_plot, 2, false},
    {"polar", draw_polar, 2, true},       {"scatter", draw_scatter, 2, false},
    {"stackplot", draw_stackplot, 0, false}, {"stem", draw_stem, 2, false},
    {"step", draw_step, 2, false},
};

std::size_t class_index(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kClasses); ++i)
    if (name == kClasses[i].name) return i;
  throw std::invalid_argument("unknown plot class '" + name + "'");
}

void draw_axes(Painter& p) {
  p.line({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}}, kBlack, 0.8);
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0, tick = 0.03;
    p.line({{t, 0}, {t, -tick}}, kBlack, 0.7);
    p.line({{0, t}, {-tick, t}}, kBlack, 0.7);
  }
}

}  // namespace

const char* domain_name(Domain domain) { return domain == Domain::standard ? "standard" : "hand_drawn"; }

Domain parse_domain(const std::string& name) {
  if (name == "standard") return Domain::standard;
  if (name == "hand_drawn" || name == "hand-drawn") return Domain::hand_drawn;
  throw std::invalid_argument("unknown domain '" + name + "'");
}

const std::vector<std::string>& plot_classes() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : kClasses) v.emplace_back(c.name);
    return v;
  }();
  return names;
}

bool exclusive_class(const std::string& name) { return kClasses[class_index(name)].exclusive; }

bool compatible(const std::string& a, const std::string& b) {
  if (a == b) return false;
  return !exclusive_class(a) && !exclusive_class(b);
}

Sample render_sample(const std::vector<std::string>& classes, Domain domain, std::uint64_t seed, std::size_t size) {
  if (classes.empty() || classes.size() > 3) throw std::invalid_argument("render_sample: need 1 to 3 classes");
  if (size < 16) throw std::invalid_argument("render_sample: size must be at least 16");
  std::vector<std::size_t> idx;
  for (const auto& c : classes) idx.push_back(class_index(c));
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = i + 1; j < classes.size(); ++j)
      if (!compatible(classes[i], classes[j]))
        throw std::invalid_argument("render_sample: incompatible classes '" + classes[i] + "' and '" + classes[j] + "'");

  Canvas canvas(size, size, 4);
  Rng style(Rng::derive(seed, 0));
  const bool square = kClasses[idx[0]].exclusive;
  Painter painter(canvas, domain, style, square);
  if (!square) draw_axes(painter);

  std::vector<std::size_t> order = idx;
  std::stable_sort(order.begin(), order.end(),
                   [](std::size_t a, std::size_t b) { return kClasses[a].layer < kClasses[b].layer; });
  const double alpha = classes.size() > 1 ? 0.7 : 1.0;
  for (std::size_t i : order) {
    Rng rng(Rng::derive(seed, 1 + i));
    Ctx ctx{painter, rng, alpha};
    kClasses[i].draw(ctx);
  }

  Sample s;
  s.image = canvas.resolve();
  s.classes = classes;
  s.labels = task::LabelVector::from_names(task::ApiCatalog::python13(), classes);
  s.domain = domain;
  s.seed = seed;
  return s;
}

num::Tensor to_tensor(const RgbImage& image, num::DType dtype) {
  num::Tensor t({3, image.height, image.width}, dtype);
  num::dispatch(dtype, [&]<class T>() {
    auto d = t.data<T>();
    const std::size_t plane = image.width * image.height;
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c) d[c * plane + i] = static_cast<T>(image.pixels[i * 3 + c] / 255.0);
  });
  return t;
}

}  // namespace pa::synth
