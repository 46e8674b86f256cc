#pragma once

// Synthetic floorplans and the exact per-view ground-truth boundary.
//
// Rooms live in the world BEV plane with coordinates (x, z). Boundaries are
// closed counter-clockwise chains of straight segments and circular arcs.
// Ground truth is exact ray/edge intersection; the noise models corrupt it
// the way a pre-trained monocular estimator would, including hallucinating
// through occluding corners.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlc/error.hpp"
#include "mlc/geometry.hpp"
#include "mlc/parallel.hpp"

namespace mlc {

using Vec2 = Eigen::Vector2d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Vec2 to_bev(const Vec3& p) { return {p.x(), p.z()}; }

struct Segment {
  Vec2 a;
  Vec2 b;
};

/// Circular arc: center + radius * (cos t, sin t) for t in [start, start + sweep],
/// sweep > 0 (counter-clockwise).
struct Arc {
  Vec2 center;
  double radius = 1.0;
  double start = 0.0;
  double sweep = 2.0 * kPi;

  Vec2 at(double angle) const { return center + radius * Vec2(std::cos(angle), std::sin(angle)); }
  Vec2 begin_point() const { return at(start); }
  Vec2 end_point() const { return at(start + sweep); }

  bool spans(double angle) const {
    double rel = std::fmod(angle - start, 2.0 * kPi);
    if (rel < 0.0) rel += 2.0 * kPi;
    return rel <= sweep + 1e-12 || sweep >= 2.0 * kPi - 1e-12;
  }
};

using Edge = std::variant<Segment, Arc>;

enum class RoomShape { Rect, LShape, TShape, PolygonK, ArcWall };

inline const char* to_string(RoomShape s) {
  switch (s) {
    case RoomShape::Rect: return "rect";
    case RoomShape::LShape: return "lshape";
    case RoomShape::TShape: return "tshape";
    case RoomShape::PolygonK: return "polygon";
    case RoomShape::ArcWall: return "arc";
  }
  return "unknown";
}

struct RoomSpec {
  std::string scene_id = "room";
  RoomShape shape = RoomShape::Rect;
  std::vector<Edge> edges;
  double ceiling_height = 2.5;

  /// Polygonal outline; arcs are sampled at roughly `arc_step` radians.
  std::vector<Vec2> outline(double arc_step = kPi / 360.0) const {
    std::vector<Vec2> out;
    for (const auto& e : edges) {
      if (const auto* s = std::get_if<Segment>(&e)) {
        out.push_back(s->a);
      } else {
        const auto& a = std::get<Arc>(e);
        const int n = std::max(8, static_cast<int>(std::ceil(a.sweep / arc_step)));
        for (int k = 0; k < n; ++k) out.push_back(a.at(a.start + a.sweep * k / n));
      }
    }
    return out;
  }

  /// Edges adjacent to a reflex corner. From inside the room these are the
  /// walls that occlude what lies behind the corner.
  std::vector<bool> reentrant_edges() const {
    const std::size_t n = edges.size();
    std::vector<bool> out(n, false);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& prev = edges[(k + n - 1) % n];
      const auto& next = edges[k];
      if (cross2(end_tangent(prev), start_tangent(next)) < -1e-12) {
        out[(k + n - 1) % n] = true;
        out[k] = true;
      }
    }
    return out;
  }

  void validate() const {
    require(edges.size() >= 1, ErrorKind::InvalidArgument, "room '" + scene_id + "' has no edges");
    require(ceiling_height > 0.0, ErrorKind::InvalidArgument, "ceiling height must be positive");
    const auto poly = outline();
    double area2 = 0.0;
    for (std::size_t k = 0; k < poly.size(); ++k) area2 += cross2(poly[k], poly[(k + 1) % poly.size()]);
    require(area2 > 0.0, ErrorKind::InvalidArgument, "room '" + scene_id + "' is not counter-clockwise");
    require(area2 / 2.0 > 1.0, ErrorKind::InvalidArgument, "room '" + scene_id + "' area must exceed 1 m^2");
  }

 private:
  static Vec2 start_tangent(const Edge& e) {
    if (const auto* s = std::get_if<Segment>(&e)) return (s->b - s->a).normalized();
    const auto& a = std::get<Arc>(e);
    return {-std::sin(a.start), std::cos(a.start)};
  }
  static Vec2 end_tangent(const Edge& e) {
    if (const auto* s = std::get_if<Segment>(&e)) return (s->b - s->a).normalized();
    const auto& a = std::get<Arc>(e);
    const double t = a.start + a.sweep;
    return {-std::sin(t), std::cos(t)};
  }
};

// ---------------------------------------------------------------------------
// Room factories. All rooms are centered near the origin.

inline RoomSpec make_polygon_room(std::vector<Vec2> vertices, RoomShape shape, std::string scene_id) {
  RoomSpec room;
  room.scene_id = std::move(scene_id);
  room.shape = shape;
  for (std::size_t k = 0; k < vertices.size(); ++k) {
    room.edges.emplace_back(Segment{vertices[k], vertices[(k + 1) % vertices.size()]});
  }
  room.validate();
  return room;
}

inline RoomSpec make_rect(double width, double depth, std::string scene_id = "rect") {
  const double x = width / 2.0, z = depth / 2.0;
  return make_polygon_room({{-x, -z}, {x, -z}, {x, z}, {-x, z}}, RoomShape::Rect, std::move(scene_id));
}

/// width x depth rectangle with a notch_w x notch_d block cut from the +x,+z corner.
inline RoomSpec make_lshape(double width, double depth, double notch_w, double notch_d,
                            std::string scene_id = "lshape") {
  require(notch_w > 0 && notch_w < width && notch_d > 0 && notch_d < depth, ErrorKind::InvalidArgument,
          "L notch must be strictly inside the bounding rectangle");
  const double x = width / 2.0, z = depth / 2.0;
  return make_polygon_room(
      {{-x, -z}, {x, -z}, {x, z - notch_d}, {x - notch_w, z - notch_d}, {x - notch_w, z}, {-x, z}},
      RoomShape::LShape, std::move(scene_id));
}

/// A bar of width x bar_depth on top of a centered stem of stem_w x (depth - bar_depth).
inline RoomSpec make_tshape(double width, double depth, double stem_w, double bar_depth,
                            std::string scene_id = "tshape") {
  require(stem_w > 0 && stem_w < width && bar_depth > 0 && bar_depth < depth, ErrorKind::InvalidArgument,
          "T stem and bar must fit the bounding rectangle");
  const double x = width / 2.0, z = depth / 2.0, s = stem_w / 2.0, b = z - bar_depth;
  return make_polygon_room({{-s, -z}, {s, -z}, {s, b}, {x, b}, {x, z}, {-x, z}, {-x, b}, {-s, b}},
                           RoomShape::TShape, std::move(scene_id));
}

inline RoomSpec make_regular_polygon(int sides, double circumradius, std::string scene_id = "polygon") {
  require(sides >= 3, ErrorKind::InvalidArgument, "polygon needs at least 3 sides");
  std::vector<Vec2> v;
  for (int k = 0; k < sides; ++k) {
    const double a = 2.0 * kPi * k / sides;
    v.emplace_back(circumradius * std::cos(a), circumradius * std::sin(a));
  }
  return make_polygon_room(std::move(v), RoomShape::PolygonK, std::move(scene_id));
}

inline RoomSpec make_circle(double radius, std::string scene_id = "circle") {
  RoomSpec room;
  room.scene_id = std::move(scene_id);
  room.shape = RoomShape::ArcWall;
  room.edges.emplace_back(Arc{{0.0, 0.0}, radius, 0.0, 2.0 * kPi});
  room.validate();
  return room;
}

/// width x depth rectangle whose +z wall is replaced by a semicircular apse.
inline RoomSpec make_apse_room(double width, double depth, std::string scene_id = "apse") {
  const double x = width / 2.0, z = depth / 2.0;
  RoomSpec room;
  room.scene_id = std::move(scene_id);
  room.shape = RoomShape::ArcWall;
  room.edges.emplace_back(Segment{{-x, -z}, {x, -z}});
  room.edges.emplace_back(Segment{{x, -z}, {x, z}});
  room.edges.emplace_back(Arc{{0.0, z}, x, 0.0, kPi});
  room.edges.emplace_back(Segment{{-x, z}, {-x, -z}});
  room.validate();
  return room;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded room of the given shape with dimensions drawn from a
/// residential-sized range.
inline RoomSpec make_random_room(RoomShape shape, std::uint64_t seed, std::string scene_id = {}) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x726f6f6dULL));
  std::uniform_real_distribution<double> size(4.0, 8.0);
  std::uniform_real_distribution<double> frac(0.35, 0.6);
  if (scene_id.empty()) scene_id = std::string(to_string(shape)) + "_" + std::to_string(seed);
  const double w = size(rng), d = size(rng);
  switch (shape) {
    case RoomShape::Rect: return make_rect(w, d, scene_id);
    case RoomShape::LShape: return make_lshape(w, d, w * frac(rng), d * frac(rng), scene_id);
    case RoomShape::TShape: return make_tshape(w, d, w * frac(rng), d * frac(rng), scene_id);
    case RoomShape::PolygonK: {
      std::uniform_int_distribution<int> sides(5, 8);
      return make_regular_polygon(sides(rng), std::min(w, d) / 2.0, scene_id);
    }
    case RoomShape::ArcWall: return make_apse_room(w, d, scene_id);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown room shape");
}

// ---------------------------------------------------------------------------
// Ray casting against the boundary

struct BoundaryHit {
  double distance = 0.0;
  std::size_t edge = 0;
};

/// All boundary crossings of the ray origin + t * dir (t > 0, dir unit),
/// ascending; a crossing exactly at a shared vertex is reported once.
inline std::vector<BoundaryHit> ray_hits(const RoomSpec& room, const Vec2& origin, const Vec2& dir) {
  constexpr double kMinT = 1e-12;
  std::vector<BoundaryHit> hits;
  for (std::size_t k = 0; k < room.edges.size(); ++k) {
    if (const auto* s = std::get_if<Segment>(&room.edges[k])) {
      const Vec2 e = s->b - s->a;
      const double denom = cross2(dir, e);
      if (std::abs(denom) < 1e-15) continue;
      const Vec2 ao = s->a - origin;
      const double t = cross2(ao, e) / denom;
      const double u = cross2(ao, dir) / denom;
      if (t > kMinT && u >= 0.0 && u <= 1.0) hits.push_back({t, k});
    } else {
      const auto& a = std::get<Arc>(room.edges[k]);
      const Vec2 oc = origin - a.center;
      const double b = dir.dot(oc);
      const double c = oc.squaredNorm() - a.radius * a.radius;
      const double disc = b * b - c;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      for (double t : {-b - sq, -b + sq}) {
        if (t <= kMinT) continue;
        const Vec2 p = origin + t * dir - a.center;
        if (a.spans(std::atan2(p.y(), p.x()))) hits.push_back({t, k});
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const auto& l, const auto& r) {
    return l.distance < r.distance || (l.distance == r.distance && l.edge < r.edge);
  });
  std::vector<BoundaryHit> unique;
  for (const auto& h : hits) {
    if (unique.empty() || h.distance - unique.back().distance > 1e-9) unique.push_back(h);
  }
  return unique;
}

/// Even-odd containment using exact crossings along a fixed skew direction.
inline bool contains(const RoomSpec& room, const Vec2& p) {
  const Vec2 dir = Vec2(0.8191520442889918, 0.5735764363510462);  // 35 degrees
  return ray_hits(room, p, dir).size() % 2 == 1;
}

inline double distance_to_edge(const Edge& edge, const Vec2& p) {
  if (const auto* s = std::get_if<Segment>(&edge)) {
    const Vec2 e = s->b - s->a;
    const double t = std::clamp((p - s->a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    return (s->a + t * e - p).norm();
  }
  const auto& a = std::get<Arc>(edge);
  const Vec2 d = p - a.center;
  if (a.spans(std::atan2(d.y(), d.x()))) return std::abs(d.norm() - a.radius);
  return std::min((a.begin_point() - p).norm(), (a.end_point() - p).norm());
}

inline double distance_to_boundary(const RoomSpec& room, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : room.edges) best = std::min(best, distance_to_edge(e, p));
  return best;
}

// ---------------------------------------------------------------------------
// Camera placement and ground truth

inline constexpr double kWallMargin = 0.2;

/// Cameras sampled uniformly inside the room eroded by `margin`, with a
/// uniformly random yaw. Deterministic in `seed`.
inline std::vector<Pose> generate_scene(const RoomSpec& room, int n_views, std::uint64_t seed,
                                        double margin = kWallMargin) {
  require(n_views >= 1, ErrorKind::InvalidArgument, "n_views must be >= 1");
  room.validate();
  const auto poly = room.outline();
  Vec2 lo = poly.front(), hi = poly.front();
  for (const auto& v : poly) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uz(lo.y(), hi.y()), yaw(-kPi, kPi);
  std::vector<Pose> poses;
  constexpr int kMaxAttempts = 100000;
  int attempts = 0;
  while (static_cast<int>(poses.size()) < n_views) {
    require(++attempts <= kMaxAttempts, ErrorKind::Placement,
            "could not place cameras at least " + std::to_string(margin) + " m inside room '" +
                room.scene_id + "'");
    const Vec2 c(ux(rng), uz(rng));
    const double psi = yaw(rng);
    if (!contains(room, c) || distance_to_boundary(room, c) < margin) continue;
    poses.push_back(Pose::from_center_yaw(Vec3(c.x(), 0.0, c.y()), psi));
  }
  return poses;
}

/// World BEV direction of camera column bearing theta.
inline Vec2 world_bev_direction(const Pose& pose, double theta) {
  const Vec3 d = pose.rotation().transpose() * Vec3(std::sin(theta), 0.0, std::cos(theta));
  return Vec2(d.x(), d.z()).normalized();
}

/// Per-column boundary crossings for one camera.
inline std::vector<std::vector<BoundaryHit>> column_hits(const RoomSpec& room, const Pose& pose,
                                                         std::size_t width) {
  const Vec2 c = to_bev(pose.center());
  require(contains(room, c), ErrorKind::Placement, "camera is outside room '" + room.scene_id + "'");
  const auto theta = columns_to_longitudes(width);
  std::vector<std::vector<BoundaryHit>> out(width);
  for (std::size_t j = 0; j < width; ++j) {
    out[j] = ray_hits(room, c, world_bev_direction(pose, theta[j]));
    require(!out[j].empty(), ErrorKind::Placement, "ray escapes room '" + room.scene_id + "'");
  }
  return out;
}

inline LayoutView render_gt_boundary(const RoomSpec& room, const Pose& pose, std::size_t width,
                                     double camera_height, std::string view_id = "view") {
  const auto hits = column_hits(room, pose, width);
  LayoutView view{std::move(view_id), Representation::HorizonDepth, {}, camera_height, kDefaultImageHeight};
  view.values.reserve(width);
  for (const auto& h : hits) view.values.push_back(h.front().distance);
  return view;
}

// ---------------------------------------------------------------------------
// Estimator noise

enum class OcclusionMode { SeeThrough, Inflate };

struct OcclusionBias {
  double prob = 0.0;
  OcclusionMode mode = OcclusionMode::SeeThrough;
  double factor = 1.5;  // Inflate only
};

struct OutlierNoise {
  double prob = 0.0;
  double scale = 0.0;  // log-depth std of an outlier
};

/// Extra lognormal noise on columns whose true wall lies beyond `distance`.
struct FarWallNoise {
  double distance = 2.0;
  double sigma = 0.0;
};

struct NoiseModel {
  double depth_sigma = 0.0;  // lognormal scale on depth
  int smooth_window = 1;     // circular moving average over columns, in log-depth
  OcclusionBias occlusion;
  OutlierNoise outlier;
  FarWallNoise far;
  std::uint64_t rng_seed = 0;

  void validate() const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(depth_sigma >= 0.0 && std::isfinite(depth_sigma), ErrorKind::InvalidArgument,
            "depth_sigma must be >= 0");
    require(smooth_window >= 1, ErrorKind::InvalidArgument, "smooth_window must be >= 1");
    require(in01(occlusion.prob) && in01(outlier.prob), ErrorKind::InvalidArgument,
            "noise probabilities must lie in [0, 1]");
    require(occlusion.factor > 0.0 && outlier.scale >= 0.0, ErrorKind::InvalidArgument,
            "occlusion factor must be > 0 and outlier scale >= 0");
    require(far.sigma >= 0.0 && far.distance >= 0.0, ErrorKind::InvalidArgument,
            "far-wall noise sigma and distance must be >= 0");
  }

  bool is_zero() const {
    return depth_sigma == 0.0 && smooth_window == 1 && occlusion.prob == 0.0 && outlier.prob == 0.0 &&
           far.sigma == 0.0;
  }
};

/// Independent stream per (seed, view id, noise stage), so a view's noise
/// does not depend on which other views exist or how work is scheduled.
inline std::mt19937_64 view_stream(std::uint64_t seed, std::string_view view_id, std::uint64_t stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : view_id) h = (h ^ ch) * 0x100000001b3ULL;
  return std::mt19937_64(splitmix64(splitmix64(seed ^ h) + stage));
}

inline std::string default_view_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "view_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// Noisy estimate for one camera. Stages, each with its own stream:
/// occlusion bias on columns whose first hit is a re-entrant wall, lognormal
/// depth noise, extra far-wall noise, circular smoothing in log-depth,
/// sparse outliers.
inline LayoutView simulate_view(const RoomSpec& room, const Pose& pose, std::size_t width,
                                double camera_height, const NoiseModel& noise, std::string view_id) {
  noise.validate();
  const auto hits = column_hits(room, pose, width);
  LayoutView view{std::move(view_id), Representation::HorizonDepth, {}, camera_height, kDefaultImageHeight};
  auto& d = view.values;
  d.reserve(width);
  for (const auto& h : hits) d.push_back(h.front().distance);
  if (noise.is_zero()) return view;

  if (noise.occlusion.prob > 0.0) {
    const auto reentrant = room.reentrant_edges();
    auto rng = view_stream(noise.rng_seed, view.view_id, 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t j = 0; j < width; ++j) {
      const double draw = u(rng);
      if (!reentrant[hits[j].front().edge] || draw >= noise.occlusion.prob) continue;
      if (noise.occlusion.mode == OcclusionMode::SeeThrough) {
        if (hits[j].size() > 1) d[j] = hits[j][1].distance;
      } else {
        d[j] *= noise.occlusion.factor;
      }
    }
  }
  if (noise.depth_sigma > 0.0) {
    auto rng = view_stream(noise.rng_seed, view.view_id, 2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : d) x *= std::exp(noise.depth_sigma * n(rng));
  }
  if (noise.far.sigma > 0.0) {
    auto rng = view_stream(noise.rng_seed, view.view_id, 4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t j = 0; j < width; ++j) {
      const double z = n(rng);
      if (hits[j].front().distance > noise.far.distance) d[j] *= std::exp(noise.far.sigma * z);
    }
  }
  if (noise.smooth_window > 1) {
    std::vector<double> logd(width);
    for (std::size_t j = 0; j < width; ++j) logd[j] = std::log(d[j]);
    const auto half = static_cast<long long>(noise.smooth_window / 2);
    const auto span = static_cast<long long>(noise.smooth_window);
    const auto w = static_cast<long long>(width);
    for (long long j = 0; j < w; ++j) {
      double acc = 0.0;
      for (long long k = j - half; k < j - half + span; ++k) acc += logd[static_cast<std::size_t>(((k % w) + w) % w)];
      d[static_cast<std::size_t>(j)] = std::exp(acc / static_cast<double>(span));
    }
  }
  if (noise.outlier.prob > 0.0) {
    auto rng = view_stream(noise.rng_seed, view.view_id, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : d) {
      const double draw = u(rng);
      const double z = n(rng);
      if (draw < noise.outlier.prob) x *= std::exp(noise.outlier.scale * z);
    }
  }
  return view;
}

inline std::vector<LayoutView> simulate_estimates(const RoomSpec& room, const std::vector<Pose>& poses,
                                                  std::size_t width, double camera_height,
                                                  const NoiseModel& noise, unsigned threads = 0) {
  std::vector<LayoutView> out(poses.size());
  parallel_for(poses.size(), threads, [&](std::size_t i) {
    out[i] = simulate_view(room, poses[i], width, camera_height, noise, default_view_id(i));
  });
  return out;
}

/// Convenience: a full scene of views (estimates) with their poses.
inline Scene make_scene(const RoomSpec& room, const std::vector<Pose>& poses, std::size_t width,
                        double camera_height, const NoiseModel& noise, unsigned threads = 0) {
  Scene scene{room.scene_id, {}, room.ceiling_height};
  auto views = simulate_estimates(room, poses, width, camera_height, noise, threads);
  for (std::size_t i = 0; i < poses.size(); ++i) scene.views.push_back({std::move(views[i]), poses[i]});
  return scene;
}

}  // namespace mlc
