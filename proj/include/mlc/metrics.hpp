#pragma once

// Weighted-distance loss and layout evaluation metrics (rasterized 2D/3D
// IoU, depth RMS and delta1).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mlc/error.hpp"
#include "mlc/geometry.hpp"
#include "mlc/raycast.hpp"
#include "mlc/scene_sim.hpp"

namespace mlc {

// ---------------------------------------------------------------------------
// Weighted-distance loss

struct LossParams {
  double kappa = 0.5;       // 1/m
  double d_min = 2.0;       // m
  double huber_eps = 0.0;   // m; 0 is exact L1
  double sigma_floor = 1e-3;

  void validate() const {
    require(kappa >= 0.0 && d_min >= 0.0 && huber_eps >= 0.0, ErrorKind::InvalidArgument,
            "kappa, d_min and huber_eps must be >= 0");
    require(sigma_floor > 0.0, ErrorKind::InvalidArgument, "sigma_floor must be > 0");
  }
};

/// exp(kappa * (|label| - d_min)) / max(sigma, floor)^2
inline double column_weight(const Vec3& label, double sigma, const LossParams& p) {
  const double s = std::max(sigma, p.sigma_floor);
  return std::exp(p.kappa * (label.norm() - p.d_min)) / (s * s);
}

/// |r| for eps == 0, otherwise the Huber function with the same slope.
inline double residual_penalty(double r, double eps) {
  const double a = std::abs(r);
  if (eps <= 0.0) return a;
  return a <= eps ? r * r / (2.0 * eps) : a - eps / 2.0;
}

/// d/dr of residual_penalty; the L1 subgradient at 0 is taken as 0.
inline double residual_slope(double r, double eps) {
  if (eps > 0.0 && std::abs(r) <= eps) return r / eps;
  return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
}

struct WeightedLoss {
  double value = 0.0;
  std::vector<double> weights;  // 0 on invalid columns
  std::size_t valid_columns = 0;
};

/// Mean over valid columns of w_j * ||y_j - label_j||_1 (component-wise).
inline WeightedLoss weighted_distance_loss(std::span<const Vec3> pred, const PseudoLabel& label,
                                           const LossParams& params) {
  params.validate();
  require(pred.size() == label.width(), ErrorKind::InvalidArgument,
          "prediction width " + std::to_string(pred.size()) + " != label width " +
              std::to_string(label.width()));
  WeightedLoss out;
  out.weights.assign(pred.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (!label.valid(j)) continue;
    const Vec3& target = *label.points[j];
    const double w = column_weight(target, *label.sigma[j], params);
    out.weights[j] = w;
    const Vec3 r = pred[j] - target;
    sum += w * (residual_penalty(r.x(), params.huber_eps) + residual_penalty(r.y(), params.huber_eps) +
                residual_penalty(r.z(), params.huber_eps));
    ++out.valid_columns;
  }
  require(out.valid_columns > 0, ErrorKind::DegenerateLabel,
          "label '" + label.view_id + "' has no valid columns");
  out.value = sum / static_cast<double>(out.valid_columns);
  return out;
}

// ---------------------------------------------------------------------------
// Rasterized IoU

using Polygon = std::vector<Vec2>;

inline double polygon_area(const Polygon& poly) {
  double a2 = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) a2 += cross2(poly[k], poly[(k + 1) % poly.size()]);
  return std::abs(a2) / 2.0;
}

/// Grid over the union bounding box of two polygons; a cell belongs to a
/// polygon when its center passes the even-odd crossing test.
class RasterGrid {
 public:
  RasterGrid(const Polygon& a, const Polygon& b, double resolution) : res_(resolution) {
    require(resolution > 0.0, ErrorKind::InvalidArgument, "raster resolution must be > 0");
    lo_ = a.front();
    Vec2 hi = a.front();
    for (const auto* poly : {&a, &b}) {
      for (const auto& v : *poly) {
        lo_ = lo_.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
    }
    nx_ = static_cast<long long>(std::ceil((hi.x() - lo_.x()) / res_));
    ny_ = static_cast<long long>(std::ceil((hi.y() - lo_.y()) / res_));
  }

  double center_x(long long k) const { return lo_.x() + (static_cast<double>(k) + 0.5) * res_; }
  double center_y(long long r) const { return lo_.y() + (static_cast<double>(r) + 0.5) * res_; }
  long long cols() const { return nx_; }
  long long rows() const { return ny_; }
  double cell_area() const { return res_ * res_; }

  /// Half-open column ranges [first, second) inside `poly` on row r.
  std::vector<std::pair<long long, long long>> row_spans(const Polygon& poly, long long r) const {
    const double y = center_y(r);
    std::vector<double> xs;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Vec2& p = poly[k];
      const Vec2& q = poly[(k + 1) % poly.size()];
      if ((p.y() <= y) != (q.y() <= y)) xs.push_back(p.x() + (y - p.y()) * (q.x() - p.x()) / (q.y() - p.y()));
    }
    std::sort(xs.begin(), xs.end());
    std::vector<std::pair<long long, long long>> spans;
    for (std::size_t m = 0; m + 1 < xs.size(); m += 2) {
      const long long first = first_center_at_or_after(xs[m]);
      const long long last = first_center_at_or_after(xs[m + 1]);
      if (last > first) spans.emplace_back(first, last);
    }
    return spans;
  }

 private:
  // Smallest k in [0, nx] whose center is >= x.
  long long first_center_at_or_after(double x) const {
    long long k = static_cast<long long>(std::ceil((x - lo_.x()) / res_ - 0.5));
    k = std::clamp<long long>(k, 0, nx_);
    while (k > 0 && center_x(k - 1) >= x) --k;
    while (k < nx_ && center_x(k) < x) ++k;
    return k;
  }

  double res_;
  Vec2 lo_;
  long long nx_ = 0;
  long long ny_ = 0;
};

struct RasterOverlap {
  double area_a = 0.0;
  double area_b = 0.0;
  double area_inter = 0.0;
};

inline RasterOverlap raster_overlap(const Polygon& a, const Polygon& b, double resolution) {
  for (const auto* poly : {&a, &b}) {
    require(poly->size() >= 3, ErrorKind::DegenerateGeometry, "polygon needs at least 3 vertices");
    require(polygon_area(*poly) >= resolution * resolution, ErrorKind::DegenerateGeometry,
            "polygon area is below one raster cell");
  }
  const RasterGrid grid(a, b, resolution);
  long long na = 0, nb = 0, ni = 0;
  for (long long r = 0; r < grid.rows(); ++r) {
    const auto sa = grid.row_spans(a, r);
    const auto sb = grid.row_spans(b, r);
    for (const auto& s : sa) na += s.second - s.first;
    for (const auto& s : sb) nb += s.second - s.first;
    std::size_t i = 0, k = 0;
    while (i < sa.size() && k < sb.size()) {
      const long long lo = std::max(sa[i].first, sb[k].first);
      const long long hi = std::min(sa[i].second, sb[k].second);
      if (hi > lo) ni += hi - lo;
      if (sa[i].second < sb[k].second) ++i; else ++k;
    }
  }
  require(na > 0 && nb > 0, ErrorKind::DegenerateGeometry, "polygon covers no raster cell centers");
  const double c = grid.cell_area();
  return {static_cast<double>(na) * c, static_cast<double>(nb) * c, static_cast<double>(ni) * c};
}

inline constexpr double kDefaultRasterResolution = 0.01;

inline double iou_2d(const Polygon& a, const Polygon& b, double resolution = kDefaultRasterResolution) {
  const auto o = raster_overlap(a, b, resolution);
  return o.area_inter / (o.area_a + o.area_b - o.area_inter);
}

inline double iou_3d(const Polygon& a, double height_a, const Polygon& b, double height_b,
                     double resolution = kDefaultRasterResolution) {
  require(height_a > 0.0 && height_b > 0.0, ErrorKind::InvalidArgument, "heights must be > 0");
  const auto o = raster_overlap(a, b, resolution);
  const double inter = o.area_inter * std::min(height_a, height_b);
  return inter / (o.area_a * height_a + o.area_b * height_b - inter);
}

// ---------------------------------------------------------------------------
// Depth errors

inline constexpr double kDelta1Threshold = 1.25;

struct DepthErrors {
  double rms = 0.0;
  double delta1 = 0.0;
  std::size_t count = 0;
};

inline DepthErrors depth_errors(std::span<const double> pred, std::span<const double> gt,
                                const std::vector<bool>& valid) {
  require(pred.size() == gt.size() && valid.size() == gt.size(), ErrorKind::InvalidArgument,
          "depth vectors and mask must share a length");
  DepthErrors out;
  double sq = 0.0;
  std::size_t good = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (!valid[j]) continue;
    require(pred[j] > 0.0 && gt[j] > 0.0, ErrorKind::InvalidArgument, "depths must be > 0");
    const double e = pred[j] - gt[j];
    sq += e * e;
    if (std::max(pred[j] / gt[j], gt[j] / pred[j]) < kDelta1Threshold) ++good;
    ++out.count;
  }
  require(out.count > 0, ErrorKind::DegenerateLabel, "depth mask selects no columns");
  out.rms = std::sqrt(sq / static_cast<double>(out.count));
  out.delta1 = static_cast<double>(good) / static_cast<double>(out.count);
  return out;
}

inline DepthErrors depth_errors(std::span<const double> pred, std::span<const double> gt) {
  return depth_errors(pred, gt, std::vector<bool>(gt.size(), true));
}

// ---------------------------------------------------------------------------
// Layout evaluation

struct EvalReport {
  double iou2d = 0.0;
  double iou3d = 0.0;
  double rms = 0.0;
  double delta1 = 0.0;
};

/// World BEV polygon traced by a view's boundary, one vertex per column.
inline Polygon boundary_polygon(const LayoutView& view, const Pose& pose) {
  Polygon poly;
  for (const auto& p : camera_points(view)) poly.push_back(to_bev(pose.camera_to_world(p)));
  return poly;
}

/// World BEV polygon of a label's valid columns.
inline Polygon label_polygon(const PseudoLabel& label, const Pose& pose) {
  Polygon poly;
  for (std::size_t j = 0; j < label.width(); ++j) {
    if (label.valid(j)) poly.push_back(to_bev(pose.camera_to_world(*label.points[j])));
  }
  return poly;
}

inline std::vector<double> horizon_depths(const LayoutView& view) {
  std::vector<double> d(view.width());
  for (std::size_t j = 0; j < view.width(); ++j) d[j] = column_distance(view, j);
  return d;
}

struct EvalOptions {
  double resolution = kDefaultRasterResolution;
  double ceiling_height = 2.5;
};

/// Mean per-view IoU, depth errors pooled over all columns of all views.
/// Each prediction is given as a BEV polygon and per-column depths with a
/// validity mask; ground truth views are noise-free renderings.
inline EvalReport evaluate(std::span<const Polygon> pred_polys, std::span<const std::vector<double>> pred_depth,
                           std::span<const std::vector<bool>> pred_valid, const Scene& gt,
                           const EvalOptions& opt = {}) {
  require(pred_polys.size() == gt.views.size() && pred_depth.size() == gt.views.size() &&
              pred_valid.size() == gt.views.size(),
          ErrorKind::InvalidArgument, "prediction and ground truth view counts differ");
  require(!gt.views.empty(), ErrorKind::EmptyScene, "ground truth has no views");
  EvalReport report;
  std::vector<double> all_pred, all_gt;
  std::vector<bool> all_valid;
  for (std::size_t i = 0; i < gt.views.size(); ++i) {
    const auto& g = gt.views[i];
    const Polygon gt_poly = boundary_polygon(g.layout, g.pose);
    report.iou2d += iou_2d(pred_polys[i], gt_poly, opt.resolution);
    report.iou3d += iou_3d(pred_polys[i], opt.ceiling_height, gt_poly, opt.ceiling_height, opt.resolution);
    const auto gd = horizon_depths(g.layout);
    require(gd.size() == pred_depth[i].size(), ErrorKind::InvalidWidth, "prediction and ground truth widths differ");
    all_pred.insert(all_pred.end(), pred_depth[i].begin(), pred_depth[i].end());
    all_gt.insert(all_gt.end(), gd.begin(), gd.end());
    all_valid.insert(all_valid.end(), pred_valid[i].begin(), pred_valid[i].end());
  }
  const double n = static_cast<double>(gt.views.size());
  report.iou2d /= n;
  report.iou3d /= n;
  const auto de = depth_errors(all_pred, all_gt, all_valid);
  report.rms = de.rms;
  report.delta1 = de.delta1;
  return report;
}

inline EvalReport evaluate_views(const Scene& pred, const Scene& gt, const EvalOptions& opt = {}) {
  require(pred.views.size() == gt.views.size(), ErrorKind::InvalidArgument,
          "prediction and ground truth view counts differ");
  std::vector<Polygon> polys;
  std::vector<std::vector<double>> depths;
  std::vector<std::vector<bool>> valid;
  for (std::size_t i = 0; i < pred.views.size(); ++i) {
    polys.push_back(boundary_polygon(pred.views[i].layout, gt.views[i].pose));
    depths.push_back(horizon_depths(pred.views[i].layout));
    valid.emplace_back(depths.back().size(), true);
  }
  return evaluate(polys, depths, valid, gt, opt);
}

inline EvalReport evaluate_labels(std::span<const PseudoLabel> labels, const Scene& gt,
                                  const EvalOptions& opt = {}) {
  require(labels.size() == gt.views.size(), ErrorKind::InvalidArgument,
          "label and ground truth view counts differ");
  std::vector<Polygon> polys;
  std::vector<std::vector<double>> depths;
  std::vector<std::vector<bool>> valid;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    polys.push_back(label_polygon(l, gt.views[i].pose));
    std::vector<double> d(l.width(), 1.0);
    std::vector<bool> v(l.width(), false);
    for (std::size_t j = 0; j < l.width(); ++j) {
      if (!l.valid(j)) continue;
      d[j] = bev_radius(*l.points[j]);
      v[j] = true;
    }
    depths.push_back(std::move(d));
    valid.push_back(std::move(v));
  }
  return evaluate(polys, depths, valid, gt, opt);
}

}  // namespace mlc
