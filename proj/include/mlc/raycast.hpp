#pragma once

// Ray-casting aggregation of multi-view floor boundaries into per-view
// pseudo-labels, plus the image-domain median aggregation it replaces.
//
// For a view i, every registered point is moved into camera i and projected
// onto the BEV ray r_j. A point belongs to the band of r_j when
//   0 < r_j . x <= delta_r   and   |n_j . x| <= delta_n.
// Each cycle replaces the working set by the per-(view, ray) median of the
// band samples; the label is the closest filtered sample on each ray, and its
// uncertainty is the spread of the unfiltered samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlc/error.hpp"
#include "mlc/geometry.hpp"
#include "mlc/parallel.hpp"

namespace mlc {

struct RaySet {
  std::vector<double> bearings;
  std::vector<Vec3> directions;
  std::vector<Vec3> normals;

  std::size_t width() const { return directions.size(); }
};

inline RaySet build_rayset(std::size_t width) {
  RaySet rays;
  rays.bearings = columns_to_longitudes(width);
  rays.directions.reserve(width);
  rays.normals.reserve(width);
  for (double theta : rays.bearings) {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    rays.directions.emplace_back(s, 0.0, c);
    rays.normals.emplace_back(c, 0.0, -s);
  }
  return rays;
}

/// Which middle element an even-sized sample's median takes.
enum class MedianRule { LowerMiddle, UpperMiddle };

struct RayBandParams {
  double delta_r = 20.0;
  double delta_n = 0.01;
  int cycles = 15;
  // Lateral bound grows to half the ray spacing at the sample's distance.
  bool widen_with_distance = false;
  // Median used by the filter cycles. Along a ray the upper middle is the
  // farther sample; the lower middle drifts labels toward the camera.
  MedianRule filter_median = MedianRule::UpperMiddle;

  void validate() const {
    require(std::isfinite(delta_r) && delta_r > 0.0, ErrorKind::InvalidArgument, "delta_r must be > 0");
    require(std::isfinite(delta_n) && delta_n > 0.0, ErrorKind::InvalidArgument, "delta_n must be > 0");
    require(cycles >= 0, ErrorKind::InvalidArgument, "cycles must be >= 0");
  }

  double lateral_bound(double along, std::size_t width) const {
    if (!widen_with_distance) return delta_n;
    return std::max(delta_n, along * kPi / static_cast<double>(width));
  }

  bool contains(double along, double lateral, std::size_t width) const {
    return along > 0.0 && along <= delta_r && std::abs(lateral) <= lateral_bound(along, width);
  }
};

/// Along-ray samples of ray j, ascending. Brute-force scan over all points;
/// this is the reference the banded query below must agree with.
inline std::vector<double> omega_projection(std::span<const Vec3> points, std::size_t ray,
                                            const RaySet& rays, const RayBandParams& band) {
  const Vec3& r = rays.directions.at(ray);
  const Vec3& n = rays.normals.at(ray);
  std::vector<double> out;
  for (const auto& x : points) {
    const double along = r.dot(x);
    if (band.contains(along, n.dot(x), rays.width())) out.push_back(along);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Band samples for every ray at once. Each point is only tested against the
/// columns inside its angular window, widened by one column on each side, so
/// membership is decided by the same predicate as omega_projection.
inline std::vector<std::vector<double>> omega_all_rays(std::span<const Vec3> points,
                                                       const RaySet& rays,
                                                       const RayBandParams& band) {
  const std::size_t width = rays.width();
  const double w = static_cast<double>(width);
  std::vector<std::vector<double>> bins(width);
  for (const auto& x : points) {
    const double rho = bev_radius(x);
    if (!(rho > 0.0)) continue;
    const double bound = band.widen_with_distance ? std::max(band.delta_n, rho * kPi / w) : band.delta_n;
    const double half = bound >= rho ? kPi / 2.0 : std::asin(bound / rho);
    const double beta = bearing_of(x);
    const auto lo = static_cast<long long>(std::floor((beta - half + kPi) * w / (2.0 * kPi))) - 1;
    const auto hi = static_cast<long long>(std::ceil((beta + half + kPi) * w / (2.0 * kPi))) + 1;
    const auto count = std::min<long long>(hi - lo + 1, static_cast<long long>(width));
    for (long long k = 0; k < count; ++k) {
      long long j = (lo + k) % static_cast<long long>(width);
      if (j < 0) j += static_cast<long long>(width);
      const auto ju = static_cast<std::size_t>(j);
      const double along = rays.directions[ju].dot(x);
      if (band.contains(along, rays.normals[ju].dot(x), width)) bins[ju].push_back(along);
    }
  }
  for (auto& b : bins) std::sort(b.begin(), b.end());
  return bins;
}

/// Lower-middle order statistic of an ascending sample.
inline double lower_median(std::span<const double> sorted) {
  require(!sorted.empty(), ErrorKind::InvalidArgument, "median of an empty sample");
  return sorted[(sorted.size() + 1) / 2 - 1];
}

/// Upper-middle order statistic of an ascending sample.
inline double upper_median(std::span<const double> sorted) {
  require(!sorted.empty(), ErrorKind::InvalidArgument, "median of an empty sample");
  return sorted[sorted.size() / 2];
}

/// Population standard deviation; exactly zero when all samples coincide.
inline double population_std(std::span<const double> samples) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "std of an empty sample");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (*mn == *mx) return 0.0;
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  return std::sqrt(var / static_cast<double>(samples.size()));
}

/// Per-view pose and floor height; what aggregation needs of a scene.
struct ViewFrame {
  Pose pose;
  double camera_height = kDefaultCameraHeight;
};

inline std::vector<ViewFrame> frames_of(const Scene& scene) {
  std::vector<ViewFrame> frames;
  frames.reserve(scene.views.size());
  for (const auto& v : scene.views) frames.push_back({v.pose, v.layout.camera_height});
  return frames;
}

/// Per-view pseudo-label in the view's camera frame. A column is valid iff
/// both its point and its sigma are present.
struct PseudoLabel {
  std::string view_id;
  std::vector<std::optional<Vec3>> points;
  std::vector<std::optional<double>> sigma;

  std::size_t width() const { return points.size(); }
  bool valid(std::size_t j) const { return points[j].has_value() && sigma[j].has_value(); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < width(); ++j) n += valid(j) ? 1 : 0;
    return n;
  }
};

/// Band samples of every ray of view `view` over a world point set.
inline std::vector<std::vector<double>> view_omegas(const WorldPointSet& world, const ViewFrame& frame,
                                                    const RaySet& rays, const RayBandParams& band) {
  const auto cam = transform_to_camera(world, frame.pose);
  return omega_all_rays(cam, rays, band);
}

/// One median-replacement cycle over all views and rays.
inline WorldPointSet filter_cycle(const WorldPointSet& current, std::span<const ViewFrame> frames,
                                  const RaySet& rays, const RayBandParams& band, unsigned threads = 0) {
  std::vector<std::vector<TaggedPoint>> per_view(frames.size());
  parallel_for(frames.size(), threads, [&](std::size_t i) {
    const auto bins = view_omegas(current, frames[i], rays, band);
    auto& out = per_view[i];
    for (std::size_t j = 0; j < bins.size(); ++j) {
      if (bins[j].empty()) continue;
      const double m =
          band.filter_median == MedianRule::UpperMiddle ? upper_median(bins[j]) : lower_median(bins[j]);
      const Vec3 cam = floor_point(m, rays.bearings[j], frames[i].camera_height);
      out.push_back({frames[i].pose.camera_to_world(cam), i, j});
    }
  });
  WorldPointSet next;
  next.scene_id = current.scene_id;
  for (auto& v : per_view) next.points.insert(next.points.end(), v.begin(), v.end());
  return next;
}

/// Runs band.cycles median-replacement cycles. Zero cycles returns the input.
inline WorldPointSet multi_cycle_filter(const WorldPointSet& initial, std::span<const ViewFrame> frames,
                                        const RaySet& rays, const RayBandParams& band,
                                        unsigned threads = 0) {
  require(!frames.empty(), ErrorKind::EmptyScene, "multi-cycle filter needs at least one view");
  band.validate();
  WorldPointSet current = initial;
  for (int k = 0; k < band.cycles; ++k) current = filter_cycle(current, frames, rays, band, threads);
  return current;
}

/// Closest filtered sample per ray and spread of the initial samples.
inline PseudoLabel extract_pseudo_label(std::size_t view, const std::string& view_id,
                                        const WorldPointSet& filtered, const WorldPointSet& initial,
                                        std::span<const ViewFrame> frames, const RaySet& rays,
                                        const RayBandParams& band) {
  const ViewFrame& frame = frames[view];
  const auto near = view_omegas(filtered, frame, rays, band);
  const auto spread = view_omegas(initial, frame, rays, band);
  PseudoLabel label{view_id, std::vector<std::optional<Vec3>>(rays.width()),
                    std::vector<std::optional<double>>(rays.width())};
  for (std::size_t j = 0; j < rays.width(); ++j) {
    if (near[j].empty() || spread[j].empty()) continue;
    label.points[j] = floor_point(near[j].front(), rays.bearings[j], frame.camera_height);
    label.sigma[j] = population_std(spread[j]);
  }
  return label;
}

/// Full ray-casting pipeline: register, filter, extract one label per view.
inline std::vector<PseudoLabel> raycast_pseudo_labels(const Scene& scene, const RayBandParams& band,
                                                      unsigned threads = 0) {
  band.validate();
  const auto initial = register_scene(scene);
  const std::size_t width = scene.views.front().layout.width();
  for (const auto& v : scene.views) {
    require(v.layout.width() == width, ErrorKind::InvalidWidth, "views in a scene must share a width");
  }
  const auto rays = build_rayset(width);
  const auto frames = frames_of(scene);
  const auto filtered = multi_cycle_filter(initial, frames, rays, band, threads);
  std::vector<PseudoLabel> labels(scene.views.size());
  parallel_for(scene.views.size(), threads, [&](std::size_t i) {
    labels[i] = extract_pseudo_label(i, scene.views[i].layout.view_id, filtered, initial, frames, rays, band);
  });
  return labels;
}

/// Image-domain aggregation: every registered point is reprojected into view
/// i, binned by nearest column, and the column takes the median boundary
/// latitude. Sigma is the spread of the reprojected pixel rows.
inline PseudoLabel mlc_median_baseline(std::size_t view, const std::string& view_id,
                                       const WorldPointSet& world, std::span<const ViewFrame> frames,
                                       std::size_t width, int image_height) {
  require(width >= kMinWidth, ErrorKind::InvalidWidth, "width below minimum");
  const ViewFrame& frame = frames[view];
  const double h = frame.camera_height;
  const auto theta = columns_to_longitudes(width);
  std::vector<std::vector<double>> lat(width);
  for (const auto& tp : world.points) {
    const Vec3 p = frame.pose.world_to_camera(tp.position);
    const double rho = bev_radius(p);
    if (!(rho > 0.0) || !(p.y() < 0.0)) continue;
    lat[bearing_to_column(bearing_of(p), width)].push_back(std::atan2(-p.y(), rho));
  }
  PseudoLabel label{view_id, std::vector<std::optional<Vec3>>(width),
                    std::vector<std::optional<double>>(width)};
  for (std::size_t j = 0; j < width; ++j) {
    auto& s = lat[j];
    if (s.empty()) continue;
    std::sort(s.begin(), s.end());
    const double phi = lower_median(s);
    std::vector<double> rows;
    rows.reserve(s.size());
    for (double x : s) rows.push_back(latitude_to_row(x, image_height));
    label.points[j] = floor_point(h / std::tan(phi), theta[j], h);
    label.sigma[j] = population_std(rows);
  }
  return label;
}

inline std::vector<PseudoLabel> median_pseudo_labels(const Scene& scene, unsigned threads = 0) {
  const auto world = register_scene(scene);
  const std::size_t width = scene.views.front().layout.width();
  for (const auto& v : scene.views) {
    require(v.layout.width() == width, ErrorKind::InvalidWidth, "views in a scene must share a width");
  }
  const auto frames = frames_of(scene);
  std::vector<PseudoLabel> labels(scene.views.size());
  parallel_for(scene.views.size(), threads, [&](std::size_t i) {
    const auto& v = scene.views[i].layout;
    labels[i] = mlc_median_baseline(i, v.view_id, world, frames, width, v.image_height);
  });
  return labels;
}

}  // namespace mlc
