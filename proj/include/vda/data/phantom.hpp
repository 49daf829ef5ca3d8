#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vda/core/errors.hpp"
#include "vda/core/rng.hpp"
#include "vda/core/tensor.hpp"

namespace vda {

enum class Domain { source, target };

inline const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

inline Domain domain_from_name(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ConfigError("unknown domain '" + s + "'");
}

/// Knobs for one synthetic domain. The source mimics bright, thick arteries
/// near the centre; the target mimics dark, thin veins toward the periphery.
struct PhantomSpec {
  int64_t image_size = 64;
  Domain domain = Domain::source;
  int n_vessels_min = 3;
  int n_vessels_max = 6;
  double radius_min_px = 2.2;
  double radius_max_px = 4.0;
  bool bright_vessels = true;
  double brain_axis_frac_y = 0.40;   // semi-axes as fractions of image_size
  double brain_axis_frac_x = 0.45;
  double noise_level = 8.0;          // std of correlated background texture, raw units
  double vessel_amplitude = 60.0;    // peak contrast against brain tissue
  double max_turn = 0.35;            // per-step curvature bound, radians
  double branch_prob = 0.05;

  static PhantomSpec source_default(int64_t size = 64) {
    PhantomSpec s;
    s.image_size = size;
    return s;
  }
  static PhantomSpec target_default(int64_t size = 64) {
    PhantomSpec s;
    s.image_size = size;
    s.domain = Domain::target;
    s.n_vessels_min = 4;
    s.n_vessels_max = 8;
    s.radius_min_px = 1.0;
    s.radius_max_px = 2.0;
    s.bright_vessels = false;
    s.vessel_amplitude = 45.0;
    return s;
  }

  void validate() const {
    if (image_size < 32) throw ConfigError("phantom: image_size must be >= 32");
    if (n_vessels_min < 0 || n_vessels_max < n_vessels_min)
      throw ConfigError("phantom: bad vessel count range");
    if (radius_min_px <= 0 || radius_max_px < radius_min_px)
      throw ConfigError("phantom: bad radius range");
    if (noise_level < 0) throw ConfigError("phantom: negative noise level");
  }
};

struct LabeledSample {
  std::string id;
  Domain domain = Domain::source;
  uint64_t seed = 0;
  Tensor<float> image;      // raw intensity units, pre-preprocessing
  Tensor<uint8_t> brain;
  Tensor<uint8_t> vessel;
};

namespace detail {

inline void blur121(Tensor<float>& img) {
  int64_t H = img.shape()[0], W = img.shape()[1];
  std::vector<float> tmp(size_t(H * W));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      float s = 2 * img[y * W + x];
      s += img[y * W + std::max<int64_t>(0, x - 1)];
      s += img[y * W + std::min<int64_t>(W - 1, x + 1)];
      tmp[y * W + x] = s * 0.25f;
    }
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      float s = 2 * tmp[y * W + x];
      s += tmp[std::max<int64_t>(0, y - 1) * W + x];
      s += tmp[std::min<int64_t>(H - 1, y + 1) * W + x];
      img[y * W + x] = s * 0.25f;
    }
}

struct Ellipse {
  double cy, cx, a, b, cos_t, sin_t;
  // Normalised squared radius: <= 1 inside.
  double rho2(double y, double x) const {
    double dy = y - cy, dx = x - cx;
    double u = dx * cos_t + dy * sin_t;
    double v = -dx * sin_t + dy * cos_t;
    return u * u / (a * a) + v * v / (b * b);
  }
};

}  // namespace detail

/// Draws one phantom slice. Everything is a pure function of (spec, seed):
/// the same call yields bit-identical images and masks.
inline LabeledSample generate_sample(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  int64_t size = spec.image_size;

  detail::Ellipse el;
  el.cy = double(size) * (0.5 + rng.uniform(-0.02, 0.02));
  el.cx = double(size) * (0.5 + rng.uniform(-0.02, 0.02));
  el.a = double(size) * spec.brain_axis_frac_x * rng.uniform(0.92, 1.05);
  el.b = double(size) * spec.brain_axis_frac_y * rng.uniform(0.92, 1.05);
  double theta = rng.uniform(0.0, 3.141592653589793);
  el.cos_t = std::cos(theta);
  el.sin_t = std::sin(theta);

  LabeledSample out;
  out.domain = spec.domain;
  out.seed = seed;
  out.brain = Tensor<uint8_t>({size, size});
  out.vessel = Tensor<uint8_t>({size, size});
  out.image = Tensor<float>({size, size});

  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      bool inside = el.rho2(double(y), double(x)) <= 1.0;
      out.brain[y * size + x] = inside ? 1 : 0;
      out.image[y * size + x] = inside ? 100.0f : 5.0f;
    }

  // Correlated texture: blurred white noise over the whole frame.
  Tensor<float> noise = Tensor<float>::randn({size, size}, rng, float(spec.noise_level));
  detail::blur121(noise);
  detail::blur121(noise);
  // Two blur passes shrink the std of white noise; rescale back.
  if (spec.noise_level > 0) {
    double acc = 0;
    for (int64_t i = 0; i < noise.numel(); ++i) acc += double(noise[i]) * noise[i];
    double measured = std::sqrt(acc / double(noise.numel()));
    if (measured > 0) {
      float k = float(spec.noise_level / measured);
      for (int64_t i = 0; i < noise.numel(); ++i) noise[i] *= k;
    }
  }
  for (int64_t i = 0; i < size * size; ++i) out.image[i] += noise[i];

  double amp = spec.bright_vessels ? spec.vessel_amplitude : -spec.vessel_amplitude;
  int n_vessels = spec.n_vessels_min +
                  int(rng.uniform_int(uint64_t(spec.n_vessels_max - spec.n_vessels_min + 1)));

  for (int v = 0; v < n_vessels; ++v) {
    double radius = rng.uniform(spec.radius_min_px, spec.radius_max_px);
    double sigma = std::max(radius / 2.0, 0.6);

    // Start point in ellipse coordinates, biased toward the centre for the
    // source domain and the periphery for the target.
    double ang = rng.uniform(0.0, 6.283185307179586);
    double u = rng.uniform();
    double rho = spec.domain == Domain::source ? 0.65 * std::pow(u, 0.7)
                                               : 0.55 + 0.38 * std::sqrt(u);
    double ey = rho * std::sin(ang) * el.b;
    double ex = rho * std::cos(ang) * el.a;
    double py = el.cy + ex * el.sin_t + ey * el.cos_t;
    double px = el.cx + ex * el.cos_t - ey * el.sin_t;

    // Initial heading roughly toward the centre so peripheral starts still
    // produce usable track length.
    double heading = std::atan2(el.cy - py, el.cx - px) + rng.uniform(-0.9, 0.9);

    struct WalkState {
      double y, x, heading;
      int steps_left;
    };
    std::vector<WalkState> stack{{py, px, heading, int(size * 3)}};
    std::vector<std::pair<double, double>> points;

    while (!stack.empty()) {
      WalkState w = stack.back();
      stack.pop_back();
      while (w.steps_left-- > 0) {
        if (el.rho2(w.y, w.x) > 0.96) break;
        points.push_back({w.y, w.x});
        w.heading += rng.uniform(-spec.max_turn, spec.max_turn);
        w.y += std::sin(w.heading);
        w.x += std::cos(w.heading);
        if (rng.bernoulli(spec.branch_prob) && w.steps_left > 8)
          stack.push_back({w.y, w.x, w.heading + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.4, 0.9),
                           w.steps_left / 2});
      }
    }

    // Squared distance to the nearest track point, updated inside a small
    // window per point; one field per vessel so radii stay independent.
    Tensor<float> d2 = Tensor<float>::full({size, size}, 1e30f);
    double reach = radius * 2.5 + 1.0;
    for (auto [cy, cx] : points) {
      int64_t y0 = std::max<int64_t>(0, int64_t(cy - reach));
      int64_t y1 = std::min<int64_t>(size - 1, int64_t(cy + reach));
      int64_t x0 = std::max<int64_t>(0, int64_t(cx - reach));
      int64_t x1 = std::min<int64_t>(size - 1, int64_t(cx + reach));
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
          float d = float((y - cy) * (y - cy) + (x - cx) * (x - cx));
          float& cell = d2[y * size + x];
          if (d < cell) cell = d;
        }
    }

    float r2 = float(radius * radius);
    float inv2s2 = float(1.0 / (2.0 * sigma * sigma));
    for (int64_t i = 0; i < size * size; ++i) {
      if (!out.brain[i]) continue;
      float d = d2[i];
      if (d > r2 * 6.25f) continue;  // beyond the stamping window
      out.image[i] += float(amp) * std::exp(-d * inv2s2);
      if (d <= r2) out.vessel[i] = 1;
    }
  }

  return out;
}

}  // namespace vda
