#pragma once

// Poses, the equirectangular column convention, and the projection between
// per-view 1D layout vectors and registered 3D floor-boundary points.
//
// Frames: y-up and gravity aligned. The camera sits at the origin of its own
// frame and the floor is the plane y = -h. A bearing theta maps to the BEV
// direction (sin theta, 0, cos theta), so rays live in the xz-plane.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlc/error.hpp"

namespace mlc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDefaultCameraHeight = 1.6;
inline constexpr int kDefaultImageHeight = 512;
inline constexpr std::size_t kMinWidth = 4;

/// Rigid world->camera transform: x_cam = R * x_world + t.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(rotation_.allFinite() && translation_.allFinite(), ErrorKind::InvalidArgument,
            "pose contains non-finite values");
    require(ortho < 1e-9 && std::abs(rotation_.determinant() - 1.0) < 1e-9,
            ErrorKind::InvalidArgument, "pose rotation is not in SO(3)");
  }

  static Pose identity() { return {}; }

  /// Camera at world position `center`, turned by `yaw` radians about +y.
  /// A camera-frame bearing theta looks along world bearing theta + yaw.
  static Pose from_center_yaw(const Vec3& center, double yaw) {
    const Mat3 cam_to_world = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
    const Mat3 world_to_cam = cam_to_world.transpose();
    return Pose(world_to_cam, -world_to_cam * center);
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 world_to_camera(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 camera_to_world(const Vec3& p) const { return rotation_.transpose() * (p - translation_); }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation_.transpose() * translation_); }

  Pose inverse() const { return Pose(rotation_.transpose(), -(rotation_.transpose() * translation_)); }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

enum class Representation { SphericalBoundary, HorizonDepth };

inline const char* to_string(Representation r) {
  return r == Representation::SphericalBoundary ? "spherical" : "horizon_depth";
}

/// One camera's floor-boundary estimate, one value per panorama column.
/// SphericalBoundary stores the boundary latitude below the horizon in
/// radians, HorizonDepth the BEV distance to the wall in meters.
struct LayoutView {
  std::string view_id;
  Representation repr = Representation::HorizonDepth;
  std::vector<double> values;
  double camera_height = kDefaultCameraHeight;
  int image_height = kDefaultImageHeight;

  std::size_t width() const { return values.size(); }

  void validate() const {
    require(values.size() >= kMinWidth, ErrorKind::InvalidWidth,
            "view '" + view_id + "' has " + std::to_string(values.size()) + " columns");
    require(std::isfinite(camera_height) && camera_height > 0.0, ErrorKind::InvalidArgument,
            "view '" + view_id + "' camera height must be positive");
    require(image_height > 0, ErrorKind::InvalidArgument,
            "view '" + view_id + "' image height must be positive");
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double v = values[j];
      const bool ok = repr == Representation::SphericalBoundary
                          ? std::isfinite(v) && v > 0.0 && v < kPi / 2.0
                          : std::isfinite(v) && v > 0.0;
      require(ok, ErrorKind::RepresentationDomain,
              "view '" + view_id + "' column " + std::to_string(j) + " value " +
                  std::to_string(v) + " outside the " + to_string(repr) + " domain");
    }
  }
};

/// A registered floor-boundary point. `view` indexes the scene's view list,
/// `column` the ray/column that produced it.
struct TaggedPoint {
  Vec3 position;
  std::size_t view = 0;
  std::size_t column = 0;
};

struct WorldPointSet {
  std::string scene_id;
  std::vector<TaggedPoint> points;
};

struct SceneView {
  LayoutView layout;
  Pose pose;
};

struct Scene {
  std::string scene_id;
  std::vector<SceneView> views;
  std::optional<double> ceiling_height;
};

// ---------------------------------------------------------------------------
// Column convention

/// theta_j = 2*pi*j/W - pi.
inline std::vector<double> columns_to_longitudes(std::size_t width) {
  require(width >= kMinWidth, ErrorKind::InvalidWidth,
          "width " + std::to_string(width) + " is below " + std::to_string(kMinWidth));
  std::vector<double> theta(width);
  for (std::size_t j = 0; j < width; ++j) {
    theta[j] = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(width) - kPi;
  }
  return theta;
}

/// Nearest column for a bearing; an exact half-way bearing goes to the lower
/// index. Total over all finite bearings.
inline std::size_t bearing_to_column(double bearing, std::size_t width) {
  const double w = static_cast<double>(width);
  double u = (bearing + kPi) * w / (2.0 * kPi);
  u = std::fmod(u, w);
  if (u < 0.0) u += w;
  const double j = std::ceil(u - 0.5);
  auto col = static_cast<long long>(j) % static_cast<long long>(width);
  if (col < 0) col += static_cast<long long>(width);
  return static_cast<std::size_t>(col);
}

/// Bearing of a camera-frame point, measured in the xz-plane.
inline double bearing_of(const Vec3& p) { return std::atan2(p.x(), p.z()); }

inline double bev_radius(const Vec3& p) { return std::hypot(p.x(), p.z()); }

/// Equirectangular row for a latitude below the horizon, clamped to the image.
inline double latitude_to_row(double latitude, int image_height) {
  const double h = static_cast<double>(image_height);
  return std::clamp(h * (latitude / kPi + 0.5), 0.0, h - 1.0);
}

inline double row_to_latitude(double row, int image_height) {
  return kPi * (row / static_cast<double>(image_height) - 0.5);
}

/// BEV distance encoded by one column value.
inline double column_distance(const LayoutView& view, std::size_t j) {
  return view.repr == Representation::SphericalBoundary
             ? view.camera_height / std::tan(view.values[j])
             : view.values[j];
}

/// Camera-frame floor point at distance d along bearing theta.
inline Vec3 floor_point(double distance, double bearing, double camera_height) {
  return {distance * std::sin(bearing), -camera_height, distance * std::cos(bearing)};
}

// ---------------------------------------------------------------------------
// Projection

/// Per-column camera-frame floor points of a view (before registration).
inline std::vector<Vec3> camera_points(const LayoutView& view) {
  view.validate();
  const auto theta = columns_to_longitudes(view.width());
  std::vector<Vec3> out(view.width());
  for (std::size_t j = 0; j < view.width(); ++j) {
    out[j] = floor_point(column_distance(view, j), theta[j], view.camera_height);
  }
  return out;
}

/// Registers a view's boundary in world coordinates, tagging each point with
/// `view_index` and its column.
inline WorldPointSet project_to_world(const LayoutView& view, const Pose& pose,
                                      std::size_t view_index = 0) {
  const auto cam = camera_points(view);
  WorldPointSet out;
  out.points.reserve(cam.size());
  for (std::size_t j = 0; j < cam.size(); ++j) {
    out.points.push_back({pose.camera_to_world(cam[j]), view_index, j});
  }
  return out;
}

/// Concatenation of every view's registered boundary.
inline WorldPointSet register_scene(const Scene& scene) {
  require(!scene.views.empty(), ErrorKind::EmptyScene, "scene '" + scene.scene_id + "' has no views");
  WorldPointSet out;
  out.scene_id = scene.scene_id;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    auto part = project_to_world(scene.views[i].layout, scene.views[i].pose, i);
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
  }
  return out;
}

inline std::vector<Vec3> transform_to_camera(const WorldPointSet& points, const Pose& pose) {
  std::vector<Vec3> out;
  out.reserve(points.points.size());
  for (const auto& p : points.points) out.push_back(pose.world_to_camera(p.position));
  return out;
}

/// A layout whose columns may be missing (no support for that column).
struct MaskedLayout {
  std::string view_id;
  Representation repr = Representation::HorizonDepth;
  std::vector<std::optional<double>> values;
  double camera_height = kDefaultCameraHeight;
  int image_height = kDefaultImageHeight;

  bool complete() const {
    return std::all_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
  }

  LayoutView to_view() const {
    require(complete(), ErrorKind::DegenerateLabel, "layout '" + view_id + "' has masked columns");
    LayoutView v{view_id, repr, {}, camera_height, image_height};
    v.values.reserve(values.size());
    for (const auto& x : values) v.values.push_back(*x);
    return v;
  }
};

inline constexpr double kFloorTolerance = 1e-6;

/// Inverse projection of per-column camera-frame floor points. Absent
/// entries become masked columns.
inline MaskedLayout unproject_to_view(std::span<const std::optional<Vec3>> columns,
                                      Representation repr, double camera_height,
                                      int image_height, std::string view_id = {}) {
  require(columns.size() >= kMinWidth, ErrorKind::InvalidWidth,
          "width " + std::to_string(columns.size()) + " is below " + std::to_string(kMinWidth));
  require(camera_height > 0.0, ErrorKind::InvalidArgument, "camera height must be positive");
  MaskedLayout out{std::move(view_id), repr, {}, camera_height, image_height};
  out.values.resize(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (!columns[j]) continue;
    const Vec3& p = *columns[j];
    require(std::abs(p.y() + camera_height) <= kFloorTolerance, ErrorKind::Registration,
            "column " + std::to_string(j) + " point is off the floor plane (y=" +
                std::to_string(p.y()) + ")");
    const double d = bev_radius(p);
    require(d > 0.0, ErrorKind::Registration, "column " + std::to_string(j) + " point at BEV radius 0");
    out.values[j] = repr == Representation::SphericalBoundary ? std::atan2(camera_height, d) : d;
  }
  return out;
}

/// Inverse projection of one view's registered points. Points are assigned
/// to their nearest column; two points competing for a column is an error.
inline MaskedLayout unproject_to_view(const WorldPointSet& points, const Pose& pose,
                                      std::size_t width, Representation repr,
                                      double camera_height, int image_height,
                                      std::string view_id = {}) {
  require(width >= kMinWidth, ErrorKind::InvalidWidth,
          "width " + std::to_string(width) + " is below " + std::to_string(kMinWidth));
  std::vector<std::optional<Vec3>> columns(width);
  for (const auto& tp : points.points) {
    const Vec3 p = pose.world_to_camera(tp.position);
    const std::size_t j = bearing_to_column(bearing_of(p), width);
    require(!columns[j], ErrorKind::InvalidArgument,
            "more than one point falls in column " + std::to_string(j));
    columns[j] = p;
  }
  return unproject_to_view(columns, repr, camera_height, image_height, std::move(view_id));
}

}  // namespace mlc
