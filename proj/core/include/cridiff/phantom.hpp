#pragma once

#include <cstdint>
#include <random>

#include "cridiff/image.hpp"

namespace cridiff::data {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the single-ellipse phantom. Lengths are fractions of the
/// image side, angles in radians.
struct PhantomSpec {
  int height = 64;
  int width = 64;
  Range center_row{0.35, 0.65};
  Range center_col{0.35, 0.65};
  Range semi_axis{0.12, 0.30};
  Range rotation{0.0, 3.14159265358979323846};
  /// Allowed fraction of pixels inside the mask.
  Range area_fraction{0.04, 0.35};
  Range foreground{0.60, 0.80};
  Range background{0.25, 0.40};
  /// Width of the intensity ramp around the rim, relative to the ellipse radius.
  double falloff = 0.25;
  double noise_sigma = 0.05;
  /// Adds a smooth low-frequency background field.
  bool texture = true;
  double texture_amplitude = 0.08;

  void validate() const;
};

struct Phantom {
  GrayImage image;
  Mask mask;
};

/// Rejection-samples an ellipse satisfying the area constraint. Throws
/// std::invalid_argument when the constraint cannot be met.
Phantom generate_phantom(const PhantomSpec& spec, std::mt19937_64& rng);

/// Independent per-item substream: seed mixed with the item index.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace cridiff::data
