#include "cridiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cridiff/labels.hpp"

namespace cridiff::metrics {
namespace {

struct Overlap {
  long long pred = 0;
  long long gt = 0;
  long long both = 0;
};

Overlap count_overlap(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "metrics");
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    o.pred += p;
    o.gt += g;
    o.both += p && g;
  }
  return o;
}

Mask boundary_mask(const Mask& mask) {
  Mask out(mask.height(), mask.width());
  for (const Pixel& p : boundary_pixels(mask)) out(p.row, p.col) = 1;
  return out;
}

// Distances from each boundary pixel of `from` to the boundary of `to`,
// read off an exact distance map of `to`'s boundary.
std::vector<double> directed_distances(const std::vector<Pixel>& from, const Mask& to_boundary) {
  const RealMap squared = labels::squared_distance_to_sites(to_boundary);
  std::vector<double> d;
  d.reserve(from.size());
  for (const Pixel& p : from) d.push_back(std::sqrt(squared(p.row, p.col)));
  return d;
}

double nearest_rank(std::vector<double> values, double percentile) {
  if (percentile >= 100.0) return *std::max_element(values.begin(), values.end());
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct SurfacePair {
  std::vector<double> pred_to_gt;
  std::vector<double> gt_to_pred;
};

// nullopt: exactly one side empty. Empty vectors: both empty.
std::optional<SurfacePair> surface_pair(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "surface distance");
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() != gb.empty()) return std::nullopt;
  SurfacePair pair;
  if (pb.empty()) return pair;
  pair.pred_to_gt = directed_distances(pb, boundary_mask(gt));
  pair.gt_to_pred = directed_distances(gb, boundary_mask(pred));
  return pair;
}

}  // namespace

double dice(const Mask& pred, const Mask& gt) {
  const Overlap o = count_overlap(pred, gt);
  if (o.pred + o.gt == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.pred + o.gt);
}

double iou(const Mask& pred, const Mask& gt) {
  const Overlap o = count_overlap(pred, gt);
  const long long uni = o.pred + o.gt - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

std::vector<Pixel> boundary_pixels(const Mask& mask) {
  std::vector<Pixel> out;
  const auto background = [&](int r, int c) { return !mask.contains(r, c) || mask(r, c) == 0; };
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      if (background(r - 1, c) || background(r + 1, c) || background(r, c - 1) ||
          background(r, c + 1)) {
        out.push_back({r, c});
      }
    }
  }
  return out;
}

std::optional<double> hausdorff(const Mask& pred, const Mask& gt, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw std::invalid_argument("hausdorff: percentile must be in (0, 100]");
  }
  const auto pair = surface_pair(pred, gt);
  if (!pair) return std::nullopt;
  if (pair->pred_to_gt.empty()) return 0.0;
  return std::max(nearest_rank(pair->pred_to_gt, percentile),
                  nearest_rank(pair->gt_to_pred, percentile));
}

std::optional<double> average_surface_distance(const Mask& pred, const Mask& gt) {
  const auto pair = surface_pair(pred, gt);
  if (!pair) return std::nullopt;
  if (pair->pred_to_gt.empty()) return 0.0;
  return 0.5 * (mean(pair->pred_to_gt) + mean(pair->gt_to_pred));
}

MetricReport evaluate(const Mask& pred, const Mask& gt, double hausdorff_percentile) {
  MetricReport r;
  r.dsc = dice(pred, gt);
  r.iou = iou(pred, gt);
  r.hsd = hausdorff(pred, gt, hausdorff_percentile);
  r.asd = average_surface_distance(pred, gt);
  return r;
}

MetricSummary summarize(const std::vector<MetricReport>& reports) {
  MetricSummary s;
  int defined = 0;
  for (const auto& r : reports) {
    s.dsc += r.dsc;
    s.iou += r.iou;
    if (r.surface_undefined()) {
      ++s.undefined_count;
      continue;
    }
    s.hsd += *r.hsd;
    s.asd += *r.asd;
    ++defined;
  }
  s.cases = static_cast<int>(reports.size());
  if (s.cases > 0) {
    s.dsc /= s.cases;
    s.iou /= s.cases;
  }
  if (defined > 0) {
    s.hsd /= defined;
    s.asd /= defined;
  }
  return s;
}

}  // namespace cridiff::metrics
