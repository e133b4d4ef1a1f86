#pragma once

#include <optional>
#include <vector>

#include "cridiff/image.hpp"

namespace cridiff::metrics {

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
  auto operator<=>(const Pixel&) const = default;
};

/// 2|P∩G| / (|P|+|G|); two empty masks score 1.
double dice(const Mask& pred, const Mask& gt);

/// |P∩G| / |P∪G|; two empty masks score 1.
double iou(const Mask& pred, const Mask& gt);

/// Foreground pixels with a 4-neighbour that is background or outside the
/// image, in row-major order.
std::vector<Pixel> boundary_pixels(const Mask& mask);

// Surface distances are in pixel units over the boundary sets. They are
// undefined (nullopt) when exactly one of the masks is empty; two empty masks
// are at distance 0.

/// Symmetric Hausdorff distance. `percentile` < 100 replaces each directed
/// maximum by that percentile (nearest-rank) of the directed distances.
std::optional<double> hausdorff(const Mask& pred, const Mask& gt, double percentile = 100.0);

/// Mean of the two directed mean surface distances.
std::optional<double> average_surface_distance(const Mask& pred, const Mask& gt);

struct MetricReport {
  double dsc = 0.0;
  double iou = 0.0;
  std::optional<double> hsd;
  std::optional<double> asd;

  bool surface_undefined() const noexcept { return !hsd || !asd; }
};

MetricReport evaluate(const Mask& pred, const Mask& gt, double hausdorff_percentile = 100.0);

/// Means over a set of reports; undefined surface distances are excluded
/// from the hsd/asd means and counted in `undefined_count`.
struct MetricSummary {
  double dsc = 0.0;
  double iou = 0.0;
  double hsd = 0.0;
  double asd = 0.0;
  int cases = 0;
  int undefined_count = 0;
};

MetricSummary summarize(const std::vector<MetricReport>& reports);

}  // namespace cridiff::metrics
