#include "cridiff/labels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cridiff::labels {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), one scanline.
// `f` holds sampled squared distances (finite values are exact integers).
void envelope_1d(std::span<const double> f, std::span<double> out, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);

  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const auto intersect = [&](int p) {
      return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
    };
    double s = intersect(v[k]);
    while (s <= z[k]) {  // z[0] is -inf, so this stops at k == 0
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }

  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace

RealMap squared_distance_to_sites(const Mask& sites) {
  const int h = sites.height();
  const int w = sites.width();
  RealMap dist(h, w, kInf);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i]) dist[i] = 0.0;
  }

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> line(static_cast<std::size_t>(std::max(h, w)));
  std::vector<double> result(line.size());

  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) line[r] = dist(r, c);
    envelope_1d(std::span(line).first(h), std::span(result).first(h), v, z);
    for (int r = 0; r < h; ++r) dist(r, c) = result[r];
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) line[c] = dist(r, c);
    envelope_1d(std::span(line).first(w), std::span(result).first(w), v, z);
    for (int c = 0; c < w; ++c) dist(r, c) = result[c];
  }
  return dist;
}

RealMap distance_transform(const Mask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  // One-pixel background frame models the outside of the image.
  Mask sites(h + 2, w + 2, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) sites(r + 1, c + 1) = mask(r, c) ? 0 : 1;
  }
  const RealMap squared = squared_distance_to_sites(sites);
  RealMap out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out(r, c) = std::sqrt(squared(r + 1, c + 1));
  }
  return out;
}

RealMap normalize01(const RealMap& map) {
  double peak = 0.0;
  for (double v : map.pixels()) {
    if (v < 0.0) throw std::invalid_argument("normalize01: negative input");
    peak = std::max(peak, v);
  }
  RealMap out(map.height(), map.width());
  if (peak == 0.0) return out;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] / peak;
  return out;
}

DecoupledLabels decouple_labels(const Mask& mask) {
  DecoupledLabels labels;
  labels.prostate = Mask(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) labels.prostate[i] = mask[i] ? 1 : 0;

  labels.normalized_dt = normalize01(distance_transform(labels.prostate));
  labels.core = RealMap(mask.height(), mask.width());
  labels.boundary = RealMap(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double g = labels.prostate[i];
    labels.core[i] = g * labels.normalized_dt[i];
    labels.boundary[i] = g * (1.0 - labels.normalized_dt[i]);
  }
  return labels;
}

}  // namespace cridiff::labels
