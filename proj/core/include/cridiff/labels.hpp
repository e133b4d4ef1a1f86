#pragma once

#include "cridiff/image.hpp"

namespace cridiff::labels {

/// Squared Euclidean distance from every pixel to the nearest nonzero pixel of
/// `sites`. Pixels with no reachable site (empty `sites`) hold +infinity.
/// Exact: values are sums of squared integer offsets.
RealMap squared_distance_to_sites(const Mask& sites);

/// Euclidean distance from each foreground pixel to the nearest background
/// pixel; 0 on background. Pixels outside the image count as background, so a
/// mask that covers the whole image is still well defined.
RealMap distance_transform(const Mask& mask);

/// Divides by the global maximum. An all-zero map stays all-zero.
RealMap normalize01(const RealMap& map);

/// Prostate mask split into soft core/boundary targets.
///   core     = mask * I'
///   boundary = mask * (1 - I')
/// where I' is the normalized distance transform of the mask.
struct DecoupledLabels {
  Mask prostate;
  RealMap normalized_dt;
  RealMap boundary;
  RealMap core;
};

DecoupledLabels decouple_labels(const Mask& mask);

}  // namespace cridiff::labels
