#include "uda/toy_domains.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace uda {

namespace {

using Rgb = std::array<float, 3>;

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6), f = h * 6 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {float(v), float(t), float(p)};
    case 1: return {float(q), float(v), float(p)};
    case 2: return {float(p), float(v), float(t)};
    case 3: return {float(p), float(q), float(v)};
    case 4: return {float(t), float(p), float(v)};
    default: return {float(v), float(p), float(q)};
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Scalar texture in [0, 1] evaluated per pixel.
struct Texture {
  enum Kind { noise, stripes, dots } kind = noise;
  double period = 8, angle = 0, radius = 2;
  int cell = 4;
  std::vector<float> grid;  // value-noise lattice
  int gw = 0;

  static Texture random(std::mt19937_64& rng, int size) {
    Texture t;
    t.kind = static_cast<Kind>(std::uniform_int_distribution<int>(0, 2)(rng));
    t.period = uniform(rng, 5, 12);
    t.angle = uniform(rng, 0, std::numbers::pi);
    t.radius = t.period * uniform(rng, 0.2, 0.35);
    t.cell = std::uniform_int_distribution<int>(2, 6)(rng);
    t.gw = size / t.cell + 2;
    t.grid.resize(static_cast<std::size_t>(t.gw) * t.gw);
    for (auto& g : t.grid) g = static_cast<float>(uniform(rng, 0, 1));
    return t;
  }

  float at(int x, int y) const {
    switch (kind) {
      case stripes: {
        const double u = x * std::cos(angle) + y * std::sin(angle);
        return std::sin(2 * std::numbers::pi * u / period) > 0 ? 1.0f : 0.0f;
      }
      case dots: {
        const double u = std::fmod(x + 0.5, period) - period / 2, v = std::fmod(y + 0.5, period) - period / 2;
        return u * u + v * v < radius * radius ? 1.0f : 0.0f;
      }
      default: {
        const double gx = (x + 0.5) / cell, gy = (y + 0.5) / cell;
        const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
        const double fx = gx - ix, fy = gy - iy;
        auto g = [&](int a, int b) { return grid[static_cast<std::size_t>(b) * gw + a]; };
        return static_cast<float>((1 - fy) * ((1 - fx) * g(ix, iy) + fx * g(ix + 1, iy)) +
                                  fy * ((1 - fx) * g(ix, iy + 1) + fx * g(ix + 1, iy + 1)));
      }
    }
  }
};

void put(Tensor& img, int x, int y, const Rgb& c) {
  for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
}

Rgb mix(const Rgb& a, const Rgb& b, float t) { return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t}; }

}  // namespace

const std::vector<std::string>& toy_class_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle"};
  return names;
}

std::vector<std::array<double, 2>> toy_polygon(const ToyObject& obj) {
  int sides = 0;
  double base = 0;
  switch (obj.shape) {
    case ToyShape::square: sides = 4; base = std::numbers::pi / 4; break;
    case ToyShape::triangle: sides = 3; base = -std::numbers::pi / 2; break;
    case ToyShape::circle: sides = obj.polygon_sides; base = std::numbers::pi / std::max(sides, 1); break;
  }
  std::vector<std::array<double, 2>> v;
  for (int i = 0; i < sides; ++i) {
    const double a = base + obj.rotation + 2 * std::numbers::pi * i / sides;
    v.push_back({obj.cx + obj.radius * std::cos(a), obj.cy + obj.radius * std::sin(a)});
  }
  return v;
}

bool toy_contains(const ToyObject& obj, double px, double py) {
  if (obj.shape == ToyShape::circle && obj.polygon_sides == 0) {
    const double dx = px - obj.cx, dy = py - obj.cy;
    return dx * dx + dy * dy <= obj.radius * obj.radius;
  }
  // Convex polygon with counter-clockwise vertices (in image axes).
  const auto v = toy_polygon(obj);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    if (cross < 0) return false;
  }
  return true;
}

ToySample render_toy_sample(std::mt19937_64& rng, ToyStyle style, const std::string& id, int size) {
  ToySample out;
  out.sample.id = id;
  const bool target = style == ToyStyle::target;

  // Geometry first so both styles share one distribution.
  const int n = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      ToyObject o;
      o.shape = static_cast<ToyShape>(std::uniform_int_distribution<int>(1, 3)(rng));
      o.radius = uniform(rng, 0.1, 0.25) * size;
      o.cx = uniform(rng, o.radius + 1, size - o.radius - 1);
      o.cy = uniform(rng, o.radius + 1, size - o.radius - 1);
      o.rotation = uniform(rng, -0.35, 0.35);
      if (target && o.shape == ToyShape::circle) o.polygon_sides = 8;
      bool clear = true;
      for (const auto& p : out.objects) {
        if (std::hypot(p.cx - o.cx, p.cy - o.cy) < p.radius + o.radius + 3) clear = false;
      }
      if (clear) {
        out.objects.push_back(o);
        break;
      }
    }
  }

  Tensor img(3, size, size);
  if (!target) {
    const Rgb bg = hsv(uniform(rng, 0, 1), uniform(rng, 0.05, 0.3), uniform(rng, 0.75, 1.0));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) put(img, x, y, bg);
  } else {
    const double hue = uniform(rng, 0, 1);
    const Rgb a = hsv(hue, uniform(rng, 0.3, 0.9), uniform(rng, 0.2, 0.9));
    const Rgb b = hsv(hue + uniform(rng, 0.15, 0.5), uniform(rng, 0.3, 0.9), uniform(rng, 0.2, 0.9));
    const Texture tex = Texture::random(rng, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) put(img, x, y, mix(a, b, tex.at(x, y)));
  }

  std::vector<char> mask(static_cast<std::size_t>(size) * size);
  std::vector<ToyObject> kept;
  for (const auto& o : out.objects) {
    std::fill(mask.begin(), mask.end(), 0);
    int x0 = size, y0 = size, x1 = -1, y1 = -1;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (toy_contains(o, x + 0.5, y + 0.5)) {
          mask[static_cast<std::size_t>(y) * size + x] = 1;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (!target) {
      const Rgb fill = hsv(uniform(rng, 0, 1), uniform(rng, 0.6, 1.0), uniform(rng, 0.45, 0.95));
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) put(img, static_cast<int>(i % size), static_cast<int>(i / size), fill);
    } else {
      const double hue = uniform(rng, 0, 1);
      const Rgb a = hsv(hue + 0.5, uniform(rng, 0.4, 1.0), uniform(rng, 0.3, 1.0));
      const Rgb b = hsv(hue + 0.5 + uniform(rng, 0.1, 0.3), uniform(rng, 0.4, 1.0), uniform(rng, 0.3, 1.0));
      const Rgb stroke = hsv(hue, uniform(rng, 0.0, 0.5), uniform(rng, 0.0, 0.15));
      const Texture tex = Texture::random(rng, size);
      constexpr int kStroke = 2;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          if (!mask[static_cast<std::size_t>(y) * size + x]) continue;
          bool edge = false;
          for (int dy = -kStroke; dy <= kStroke && !edge; ++dy)
            for (int dx = -kStroke; dx <= kStroke && !edge; ++dx) {
              const int xx = x + dx, yy = y + dy;
              edge = xx < 0 || yy < 0 || xx >= size || yy >= size || !mask[static_cast<std::size_t>(yy) * size + xx];
            }
          put(img, x, y, edge ? stroke : mix(a, b, tex.at(x, y)));
        }
    }
    // Objects too small to cover any pixel center carry no label.
    if (x1 < 0) continue;
    kept.push_back(o);
    GroundTruth g;
    g.class_id = static_cast<int>(o.shape);
    g.box = {double(x0) / size, double(y0) / size, double(x1 + 1) / size, double(y1 + 1) / size};
    out.sample.gts.push_back(g);
  }
  out.objects = std::move(kept);

  if (target) {
    std::normal_distribution<float> noise(0.0f, 0.04f);
    for (auto& v : img.vec()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  }
  out.sample.image = std::move(img);
  return out;
}

ToyDomains generate_toy_domains(std::uint64_t seed, int n_train_s, int n_train_t, int n_test_t, int image_size) {
  ToyDomains d;
  auto make = [&](Dataset& ds, std::vector<std::vector<ToyObject>>& objs, const char* name, ToyStyle style, int n,
                  std::uint64_t stream) {
    ds.name = name;
    ds.class_names = toy_class_names();
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + stream);
    for (int i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%05d", name, i);
      ToySample s = render_toy_sample(rng, style, id, image_size);
      ds.samples.push_back(std::move(s.sample));
      objs.push_back(std::move(s.objects));
    }
  };
  make(d.source_train, d.source_objects, "source_train", ToyStyle::source, n_train_s, 1);
  make(d.target_train, d.target_train_objects, "target_train", ToyStyle::target, n_train_t, 2);
  make(d.target_test, d.target_test_objects, "target_test", ToyStyle::target, n_test_t, 3);
  return d;
}

}  // namespace uda
