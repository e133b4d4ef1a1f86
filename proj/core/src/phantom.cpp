#include "cridiff/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cridiff::data {
namespace {

constexpr int kMaxAttempts = 1000;

void check_range(const Range& r, const char* name, double lo, double hi) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw std::invalid_argument(std::string("PhantomSpec: bad range for ") + name);
  }
}

double draw(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double smoothstep(double e0, double e1, double x) {
  if (e1 <= e0) return x < e0 ? 0.0 : 1.0;
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

void PhantomSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw std::invalid_argument("PhantomSpec: height and width must be positive multiples of 32");
  }
  check_range(center_row, "center_row", 0.0, 1.0);
  check_range(center_col, "center_col", 0.0, 1.0);
  check_range(semi_axis, "semi_axis", 1e-6, 1.0);
  check_range(area_fraction, "area_fraction", 0.0, 1.0);
  check_range(foreground, "foreground", 0.0, 1.0);
  check_range(background, "background", 0.0, 1.0);
  if (falloff < 0.0 || noise_sigma < 0.0 || texture_amplitude < 0.0) {
    throw std::invalid_argument("PhantomSpec: falloff, noise and texture must be non-negative");
  }
  // Continuous ellipse area π·a·b (in units of side lengths) must be able to
  // reach the requested band.
  const double max_area = std::numbers::pi * semi_axis.hi * semi_axis.hi;
  const double min_area = std::numbers::pi * semi_axis.lo * semi_axis.lo;
  if (max_area < area_fraction.lo || min_area > area_fraction.hi) {
    throw std::invalid_argument("PhantomSpec: area constraints are unreachable with these axes");
  }
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Phantom generate_phantom(const PhantomSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const double side = std::min(h, w);

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double cy = draw(rng, spec.center_row) * h;
    const double cx = draw(rng, spec.center_col) * w;
    const double a = draw(rng, spec.semi_axis) * side;
    const double b = draw(rng, spec.semi_axis) * side;
    const double theta = draw(rng, spec.rotation);
    const double fg = draw(rng, spec.foreground);
    const double bg = draw(rng, spec.background);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);

    // Normalized elliptical radius; the mask is radius <= 1.
    Image<double> radius(h, w);
    Mask mask(h, w);
    long long area = 0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double dy = r + 0.5 - cy;
        const double dx = c + 0.5 - cx;
        const double u = (dx * ct + dy * st) / a;
        const double v = (-dx * st + dy * ct) / b;
        const double rho = std::sqrt(u * u + v * v);
        radius(r, c) = rho;
        if (rho <= 1.0) {
          mask(r, c) = 1;
          ++area;
        }
      }
    }
    const double fraction = static_cast<double>(area) / (static_cast<double>(h) * w);
    if (area == 0 || fraction < spec.area_fraction.lo || fraction > spec.area_fraction.hi) continue;

    // Texture and noise are drawn only for accepted shapes so that the
    // stream consumption per phantom is bounded.
    double fy = 0, fx = 0, phase_y = 0, phase_x = 0;
    if (spec.texture) {
      fy = std::uniform_real_distribution<double>(1.0, 3.0)(rng);
      fx = std::uniform_real_distribution<double>(1.0, 3.0)(rng);
      phase_y = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
      phase_x = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
    }
    std::normal_distribution<double> noise(0.0, 1.0);

    Phantom out{GrayImage(h, w), std::move(mask)};
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double rho = radius(r, c);
        // Inside weight: 1 in the interior, ramps to 0 across the rim.
        double inside;
        if (spec.falloff == 0.0) {
          inside = rho <= 1.0 ? 1.0 : 0.0;
        } else {
          inside = 1.0 - smoothstep(1.0 - spec.falloff, 1.0 + spec.falloff, rho);
        }
        double value = bg + (fg - bg) * inside;
        if (spec.texture) {
          value += spec.texture_amplitude *
                   std::sin(2 * std::numbers::pi * fy * r / h + phase_y) *
                   std::cos(2 * std::numbers::pi * fx * c / w + phase_x);
        }
        if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise(rng);
        out.image(r, c) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
    return out;
  }
  throw std::invalid_argument("generate_phantom: could not satisfy area constraints in " +
                              std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace cridiff::data
