#include "saldrn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "saldrn/errors.hpp"
#include "saldrn/image.hpp"

namespace saldrn {
namespace {

using Rgb = std::array<double, 3>;

/// Bilinear value noise on a lattice of `cells` per side.
class ValueNoise {
 public:
  ValueNoise(std::mt19937_64& rng, int cells) : n_(cells + 2), v_(static_cast<std::size_t>(n_) * n_) {
    std::uniform_real_distribution<double> u(0, 1);
    for (double& x : v_) x = u(rng);
  }
  double operator()(double y, double x) const {  // y, x in [0, 1)
    const double fy = y * (n_ - 2), fx = x * (n_ - 2);
    const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
    double ty = fy - iy, tx = fx - ix;
    ty = ty * ty * (3 - 2 * ty);
    tx = tx * tx * (3 - 2 * tx);
    auto at = [&](int a, int b) { return v_[static_cast<std::size_t>(a) * n_ + b]; };
    return (1 - ty) * ((1 - tx) * at(iy, ix) + tx * at(iy, ix + 1)) + ty * ((1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1));
  }

 private:
  int n_;
  std::vector<double> v_;
};

struct Fbm {
  std::vector<ValueNoise> octaves;
  Fbm(std::mt19937_64& rng, int base, int count) {
    for (int o = 0; o < count; ++o) octaves.emplace_back(rng, base << o);
  }
  double operator()(double y, double x) const {
    double s = 0, amp = 0.5, norm = 0;
    for (const auto& n : octaves) {
      s += amp * n(y, x);
      norm += amp;
      amp *= 0.5;
    }
    return s / norm;
  }
};

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), px_(static_cast<std::size_t>(h) * w) {}
  Rgb& at(int y, int x) { return px_[static_cast<std::size_t>(y) * w_ + x]; }
  bool inside(int y, int x) const { return y >= 0 && x >= 0 && y < h_ && x < w_; }
  void blend(int y, int x, const Rgb& c, double a) {
    if (!inside(y, x)) return;
    Rgb& p = at(y, x);
    for (int i = 0; i < 3; ++i) p[i] = (1 - a) * p[i] + a * c[i];
  }
  int h() const { return h_; }
  int w() const { return w_; }

 private:
  int h_, w_;
  std::vector<Rgb> px_;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

void draw_road(Canvas& cv, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const double cy = u(rng) * cv.h(), cx = u(rng) * cv.w();
  const double ang = u(rng) * M_PI;
  const double dy = std::sin(ang), dx = std::cos(ang);
  const double half = 1.5 + 2.5 * u(rng);
  const Rgb asphalt{0.42 + 0.1 * u(rng), 0.42, 0.43};
  for (int y = 0; y < cv.h(); ++y)
    for (int x = 0; x < cv.w(); ++x) {
      const double d = std::abs((y - cy) * dx - (x - cx) * dy);
      if (d < half + 1) cv.blend(y, x, asphalt, std::clamp(half + 1 - d, 0.0, 1.0));
      if (d < 0.5 && (static_cast<int>((y - cy) * dy + (x - cx) * dx) / 6) % 2 == 0)
        cv.blend(y, x, {0.9, 0.9, 0.85}, 0.6);
    }
}

void draw_buildings(Canvas& cv, std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(0, 1);
  const double cy = u(rng) * cv.h(), cx = u(rng) * cv.w();
  const double spread = 0.15 * cv.h() + 0.2 * cv.h() * u(rng);
  std::normal_distribution<double> off(0, spread);
  for (int b = 0; b < count; ++b) {
    const int y0 = static_cast<int>(cy + off(rng)), x0 = static_cast<int>(cx + off(rng));
    const int bh = 4 + static_cast<int>(u(rng) * 14), bw = 4 + static_cast<int>(u(rng) * 14);
    const double tone = u(rng);
    Rgb roof = tone < 0.3 ? Rgb{0.65 + 0.2 * u(rng), 0.3, 0.25} : tone < 0.7 ? Rgb{0.75, 0.75, 0.72} : Rgb{0.3, 0.32, 0.38};
    const int sh = 2 + static_cast<int>(u(rng) * 3);
    for (int y = y0 + sh; y < y0 + bh + sh; ++y)
      for (int x = x0 + sh; x < x0 + bw + sh; ++x) cv.blend(y, x, {0.05, 0.05, 0.08}, 0.55);
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) {
        const bool ridge = (bh > bw ? x == x0 + bw / 2 : y == y0 + bh / 2);
        const bool edge = y == y0 || x == x0 || y == y0 + bh - 1 || x == x0 + bw - 1;
        Rgb c = roof;
        if (ridge) c = mix(roof, {1, 1, 1}, 0.25);
        if (edge) c = mix(roof, {0, 0, 0}, 0.3);
        cv.blend(y, x, c, 1.0);
      }
  }
}

void draw_trees(Canvas& cv, std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(0, 1);
  const double cy = u(rng) * cv.h(), cx = u(rng) * cv.w();
  std::normal_distribution<double> off(0, 0.2 * cv.h());
  for (int t = 0; t < count; ++t) {
    const double ty = cy + off(rng), tx = cx + off(rng);
    const double rad = 1.5 + 2.5 * u(rng);
    const Rgb crown{0.08 + 0.08 * u(rng), 0.25 + 0.15 * u(rng), 0.08};
    for (int y = static_cast<int>(ty - rad - 2); y <= ty + rad + 2; ++y)
      for (int x = static_cast<int>(tx - rad - 2); x <= tx + rad + 2; ++x) {
        const double d = std::hypot(y - ty, x - tx);
        cv.blend(y + 1, x + 1, {0.02, 0.05, 0.02}, 0.3 * std::clamp(rad + 0.5 - d, 0.0, 1.0));
        cv.blend(y, x, mix(crown, {0.3, 0.5, 0.2}, std::clamp((ty - y) / (2 * rad) + 0.3, 0.0, 1.0) * 0.5),
                 std::clamp(rad + 0.5 - d, 0.0, 1.0));
      }
  }
}

}  // namespace

Tensor<float> synthetic_scene(int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ContractViolation("scene of empty size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Canvas cv(h, w);

  const Fbm terrain(rng, 3, 6), moisture(rng, 2, 4), water(rng, 2, 3), grain(rng, 32, 2);
  const Rgb dry{0.62, 0.56, 0.42}, field{0.42, 0.5, 0.26}, forest{0.18, 0.3, 0.14}, deep{0.08, 0.2, 0.3},
      shallow{0.18, 0.35, 0.4};
  const double water_level = 0.35 + 0.15 * u(rng);
  const int s = std::max(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / s, fx = static_cast<double>(x) / s;
      const double t = terrain(fy, fx), m = moisture(fy, fx);
      Rgb c = mix(mix(dry, field, std::clamp(m * 1.6 - 0.3, 0.0, 1.0)), forest, std::clamp(t * 2 - 1.0, 0.0, 1.0));
      const double g = grain(fy, fx) - 0.5;
      for (double& v : c) v += 0.12 * g;
      const double wv = water(fy, fx);
      if (wv < water_level) {
        const double depth = std::clamp((water_level - wv) * 8, 0.0, 1.0);
        c = mix(c, mix(shallow, deep, depth), std::clamp((water_level - wv) * 40, 0.0, 1.0));
      }
      cv.at(y, x) = c;
    }

  const int roads = 1 + static_cast<int>(u(rng) * 3);
  for (int i = 0; i < roads; ++i) draw_road(cv, rng);
  draw_buildings(cv, rng, static_cast<int>(h * w / 900.0 * (0.5 + u(rng))));
  draw_trees(cv, rng, static_cast<int>(h * w / 700.0 * (0.5 + u(rng))));

  Tensor<float> out({1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(0, c, y, x) = static_cast<float>(std::lround(std::clamp(cv.at(y, x)[c], 0.0, 1.0) * 255) / 255.0);
  return out;
}

void write_toy_corpus(const std::string& root, int n_train, int n_test, int size, std::uint64_t seed) {
  for (const auto& [split, count, base] : {std::tuple{"train", n_train, 0}, std::tuple{"test", n_test, 100000}}) {
    const std::string dir = root + "/" + split;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%03d.png", i);
      write_image(dir + "/" + name, synthetic_scene(size, size, seed * 1000003ULL + base + i));
    }
  }
}

}  // namespace saldrn
