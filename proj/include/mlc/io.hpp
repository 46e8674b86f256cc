#pragma once

// File formats. Scenes and pseudo-labels are JSON Lines, one view per line;
// rooms, configs and reports are single JSON documents. Doubles are written
// in shortest round-trip form, so save followed by load is bit-exact.

#include "json.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlc/error.hpp"
#include "mlc/geometry.hpp"
#include "mlc/metrics.hpp"
#include "mlc/raycast.hpp"
#include "mlc/scene_sim.hpp"
#include "mlc/selftrain.hpp"

namespace mlc {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Raw file access

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "failed reading '" + path + "'");
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

/// Shortest text that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// Field access with located diagnostics

namespace detail {

struct Where {
  std::string path;
  std::size_t line = 0;  // 0 for whole-document formats

  std::string prefix() const { return line ? path + ":" + std::to_string(line) + ": " : path + ": "; }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(ErrorKind::Parse, prefix() + msg); }
};

/// Reports each unknown key once per file.
class FieldChecker {
 public:
  FieldChecker(std::string path, WarningSink sink) : path_(std::move(path)), sink_(std::move(sink)) {}

  void check(const Json& obj, std::initializer_list<const char*> known, const std::string& scope,
             std::size_t line) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      const std::string name = scope.empty() ? it.key() : scope + "." + it.key();
      if (!ok && seen_.insert(name).second && sink_) {
        sink_(path_ + (line ? ":" + std::to_string(line) : std::string()) + ": ignoring unknown field '" +
              name + "'");
      }
    }
  }

 private:
  std::string path_;
  WarningSink sink_;
  std::set<std::string> seen_;
};

inline const Json& field(const Json& obj, const char* key, const Where& w) {
  const auto it = obj.find(key);
  if (it == obj.end()) w.fail(std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const Json& v, const std::string& name, const Where& w) {
  if (!v.is_number()) w.fail("field '" + name + "' must be a number");
  return v.get<double>();
}

inline double number_or(const Json& obj, const char* key, double fallback, const Where& w) {
  const auto it = obj.find(key);
  return it == obj.end() ? fallback : number(*it, key, w);
}

inline long long integer(const Json& v, const std::string& name, const Where& w) {
  if (!v.is_number_integer()) w.fail("field '" + name + "' must be an integer");
  return v.get<long long>();
}

inline long long integer_or(const Json& obj, const char* key, long long fallback, const Where& w) {
  const auto it = obj.find(key);
  return it == obj.end() ? fallback : integer(*it, key, w);
}

inline std::string string_field(const Json& obj, const char* key, const Where& w) {
  const Json& v = field(obj, key, w);
  if (!v.is_string()) w.fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const Json& v, const std::string& name, const Where& w,
                                   std::size_t expected = 0) {
  if (!v.is_array()) w.fail("field '" + name + "' must be an array");
  if (expected && v.size() != expected) {
    w.fail("field '" + name + "' must have " + std::to_string(expected) + " entries, found " +
           std::to_string(v.size()));
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(number(x, name, w));
  return out;
}

inline Representation parse_repr(const std::string& s, const Where& w) {
  if (s == "spherical") return Representation::SphericalBoundary;
  if (s == "horizon_depth") return Representation::HorizonDepth;
  w.fail("unknown representation '" + s + "' (expected spherical or horizon_depth)");
}

/// Re-raises a library validation error with the record's location.
template <class F>
auto located(const Where& w, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), w.prefix() + e.message());
  }
}

inline Json parse_document(const std::string& text, const Where& w) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t upto = std::min(e.byte, text.size());
    Where at = w;
    at.line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    if (e.byte > 0 && upto > 0 && text[upto - 1] == '\n' && at.line > 1) --at.line;
    at.fail("malformed JSON");
  }
}

/// Non-blank lines of a JSONL file, parsed, with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, Json>> parse_lines(const std::string& text, const std::string& path) {
  std::vector<std::pair<std::size_t, Json>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Where w{path, n};
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error&) {
      w.fail("malformed record");
    }
    if (!j.is_object()) w.fail("record must be an object");
    out.emplace_back(n, std::move(j));
  }
  return out;
}

inline OrderedJson vec_json(const Vec3& v) { return OrderedJson::array({v.x(), v.y(), v.z()}); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene files

inline std::string scene_to_jsonl(const Scene& scene) {
  std::string out;
  for (const auto& sv : scene.views) {
    const Mat3& r = sv.pose.rotation();
    const Vec3& t = sv.pose.translation();
    OrderedJson rec;
    rec["scene_id"] = scene.scene_id;
    rec["view_id"] = sv.layout.view_id;
    rec["pose"]["rotation"] = {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
    rec["pose"]["translation"] = detail::vec_json(t);
    rec["repr"] = to_string(sv.layout.repr);
    rec["values"] = sv.layout.values;
    rec["camera_height"] = sv.layout.camera_height;
    rec["image_height"] = sv.layout.image_height;
    if (scene.ceiling_height) rec["ceiling_height"] = *scene.ceiling_height;
    out += rec.dump() + "\n";
  }
  return out;
}

inline Scene scene_from_jsonl(const std::string& text, const std::string& path,
                              const WarningSink& warn = warn_to_stderr) {
  using namespace detail;
  FieldChecker checker(path, warn);
  Scene scene;
  bool first = true;
  for (const auto& [line, rec] : parse_lines(text, path)) {
    const Where w{path, line};
    checker.check(rec, {"scene_id", "view_id", "pose", "repr", "values", "camera_height", "image_height",
                        "ceiling_height"},
                  "", line);
    const std::string scene_id = string_field(rec, "scene_id", w);
    if (first) {
      scene.scene_id = scene_id;
    } else if (scene_id != scene.scene_id) {
      w.fail("scene_id '" + scene_id + "' differs from '" + scene.scene_id + "' on earlier lines");
    }
    const Json& pose = field(rec, "pose", w);
    if (!pose.is_object()) w.fail("field 'pose' must be an object");
    checker.check(pose, {"rotation", "translation"}, "pose", line);
    const auto rot = numbers(field(pose, "rotation", w), "pose.rotation", w, 9);
    const auto tr = numbers(field(pose, "translation", w), "pose.translation", w, 3);
    Mat3 r;
    r << rot[0], rot[1], rot[2], rot[3], rot[4], rot[5], rot[6], rot[7], rot[8];
    SceneView sv;
    sv.pose = located(w, [&] { return Pose(r, Vec3(tr[0], tr[1], tr[2])); });
    sv.layout.view_id = string_field(rec, "view_id", w);
    sv.layout.repr = parse_repr(string_field(rec, "repr", w), w);
    sv.layout.values = numbers(field(rec, "values", w), "values", w);
    sv.layout.camera_height = number_or(rec, "camera_height", kDefaultCameraHeight, w);
    sv.layout.image_height = static_cast<int>(integer_or(rec, "image_height", kDefaultImageHeight, w));
    located(w, [&] { sv.layout.validate(); return 0; });
    if (rec.contains("ceiling_height")) {
      const double c = number(rec["ceiling_height"], "ceiling_height", w);
      if (!(c > 0.0)) w.fail("ceiling_height must be positive");
      if (scene.ceiling_height && *scene.ceiling_height != c) w.fail("ceiling_height differs between views");
      scene.ceiling_height = c;
    }
    if (!first && sv.layout.width() != scene.views.front().layout.width()) {
      w.fail("view has " + std::to_string(sv.layout.width()) + " columns, earlier views have " +
             std::to_string(scene.views.front().layout.width()));
    }
    for (const auto& other : scene.views) {
      if (other.layout.view_id == sv.layout.view_id) w.fail("duplicate view_id '" + sv.layout.view_id + "'");
    }
    scene.views.push_back(std::move(sv));
    first = false;
  }
  if (scene.views.empty()) throw Error(ErrorKind::EmptyScene, path + ": scene file has no views");
  return scene;
}

inline void save_scene(const std::string& path, const Scene& scene) { write_text(path, scene_to_jsonl(scene)); }

inline Scene load_scene(const std::string& path, const WarningSink& warn = warn_to_stderr) {
  return scene_from_jsonl(read_text(path), path, warn);
}

// ---------------------------------------------------------------------------
// Pseudo-label files

struct LabelSet {
  std::string scene_id;
  Representation repr = Representation::HorizonDepth;
  RayBandParams band;
  std::vector<PseudoLabel> labels;
};

inline std::string labels_to_jsonl(const LabelSet& set) {
  std::string out;
  for (const auto& l : set.labels) {
    OrderedJson rec;
    rec["scene_id"] = set.scene_id;
    rec["view_id"] = l.view_id;
    rec["repr"] = to_string(set.repr);
    OrderedJson y = OrderedJson::array(), sigma = OrderedJson::array(), valid = OrderedJson::array();
    for (std::size_t j = 0; j < l.width(); ++j) {
      y.push_back(l.points[j] ? detail::vec_json(*l.points[j]) : OrderedJson(nullptr));
      sigma.push_back(l.sigma[j] ? OrderedJson(*l.sigma[j]) : OrderedJson(nullptr));
      valid.push_back(l.valid(j));
    }
    rec["y"] = std::move(y);
    rec["sigma"] = std::move(sigma);
    rec["valid"] = std::move(valid);
    rec["band"] = {{"delta_r", set.band.delta_r}, {"delta_n", set.band.delta_n}, {"cycles", set.band.cycles}};
    out += rec.dump() + "\n";
  }
  return out;
}

inline LabelSet labels_from_jsonl(const std::string& text, const std::string& path,
                                  const WarningSink& warn = warn_to_stderr) {
  using namespace detail;
  FieldChecker checker(path, warn);
  LabelSet set;
  bool first = true;
  for (const auto& [line, rec] : parse_lines(text, path)) {
    const Where w{path, line};
    checker.check(rec, {"scene_id", "view_id", "repr", "y", "sigma", "valid", "band"}, "", line);
    const std::string scene_id = string_field(rec, "scene_id", w);
    const Representation repr = parse_repr(string_field(rec, "repr", w), w);
    const Json& band = field(rec, "band", w);
    if (!band.is_object()) w.fail("field 'band' must be an object");
    checker.check(band, {"delta_r", "delta_n", "cycles"}, "band", line);
    RayBandParams b;
    b.delta_r = number(field(band, "delta_r", w), "band.delta_r", w);
    b.delta_n = number(field(band, "delta_n", w), "band.delta_n", w);
    b.cycles = static_cast<int>(integer(field(band, "cycles", w), "band.cycles", w));
    located(w, [&] { b.validate(); return 0; });
    if (first) {
      set.scene_id = scene_id;
      set.repr = repr;
      set.band = b;
    } else if (scene_id != set.scene_id) {
      w.fail("scene_id '" + scene_id + "' differs from '" + set.scene_id + "' on earlier lines");
    }

    const Json& y = field(rec, "y", w);
    const Json& sigma = field(rec, "sigma", w);
    const Json& valid = field(rec, "valid", w);
    if (!y.is_array() || !sigma.is_array() || !valid.is_array()) w.fail("y, sigma and valid must be arrays");
    const std::size_t width = y.size();
    if (sigma.size() != width || valid.size() != width) w.fail("y, sigma and valid lengths differ");
    if (width < kMinWidth) w.fail("label has " + std::to_string(width) + " columns");
    PseudoLabel l{string_field(rec, "view_id", w), std::vector<std::optional<Vec3>>(width),
                  std::vector<std::optional<double>>(width)};
    for (std::size_t j = 0; j < width; ++j) {
      const std::string col = "column " + std::to_string(j);
      if (!y[j].is_null()) {
        const auto p = numbers(y[j], "y", w, 3);
        l.points[j] = Vec3(p[0], p[1], p[2]);
      }
      if (!sigma[j].is_null()) {
        const double s = number(sigma[j], "sigma", w);
        if (!(s >= 0.0) || !std::isfinite(s)) w.fail(col + " sigma must be finite and >= 0");
        l.sigma[j] = s;
      }
      if (!valid[j].is_boolean()) w.fail("field 'valid' must hold booleans");
      if (valid[j].get<bool>() != l.valid(j)) w.fail(col + " valid flag disagrees with y/sigma");
    }
    if (!first && width != set.labels.front().width()) w.fail("label width differs from earlier lines");
    set.labels.push_back(std::move(l));
    first = false;
  }
  if (set.labels.empty()) throw Error(ErrorKind::EmptyScene, path + ": label file has no views");
  return set;
}

inline void save_labels(const std::string& path, const LabelSet& set) { write_text(path, labels_to_jsonl(set)); }

inline LabelSet load_labels(const std::string& path, const WarningSink& warn = warn_to_stderr) {
  return labels_from_jsonl(read_text(path), path, warn);
}

// ---------------------------------------------------------------------------
// Room files

inline std::optional<RoomShape> parse_room_shape(const std::string& s) {
  for (RoomShape r : {RoomShape::Rect, RoomShape::LShape, RoomShape::TShape, RoomShape::PolygonK,
                      RoomShape::ArcWall}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

inline std::string room_to_json(const RoomSpec& room) {
  OrderedJson j;
  j["scene_id"] = room.scene_id;
  j["shape"] = to_string(room.shape);
  j["ceiling_height"] = room.ceiling_height;
  OrderedJson edges = OrderedJson::array();
  for (const auto& e : room.edges) {
    if (const auto* s = std::get_if<Segment>(&e)) {
      edges.push_back({{"type", "segment"}, {"a", {s->a.x(), s->a.y()}}, {"b", {s->b.x(), s->b.y()}}});
    } else {
      const auto& a = std::get<Arc>(e);
      edges.push_back({{"type", "arc"},
                       {"center", {a.center.x(), a.center.y()}},
                       {"radius", a.radius},
                       {"start", a.start},
                       {"sweep", a.sweep}});
    }
  }
  j["edges"] = std::move(edges);
  return j.dump(2) + "\n";
}

/// A room is either a list of `vertices` ([x, z] pairs, counter-clockwise)
/// or a list of `edges` mixing segments and arcs.
inline RoomSpec room_from_json(const std::string& text, const std::string& path,
                               const WarningSink& warn = warn_to_stderr) {
  using namespace detail;
  const Where w{path, 0};
  const Json j = parse_document(text, w);
  if (!j.is_object()) w.fail("room must be an object");
  FieldChecker checker(path, warn);
  checker.check(j, {"scene_id", "shape", "ceiling_height", "vertices", "edges"}, "", 0);
  RoomSpec room;
  room.scene_id = j.contains("scene_id") ? string_field(j, "scene_id", w) : "room";
  if (j.contains("shape")) {
    const auto shape = parse_room_shape(string_field(j, "shape", w));
    if (!shape) w.fail("unknown shape '" + j["shape"].get<std::string>() + "'");
    room.shape = *shape;
  }
  room.ceiling_height = number_or(j, "ceiling_height", room.ceiling_height, w);
  auto vec2 = [&](const Json& v, const std::string& name) {
    const auto p = numbers(v, name, w, 2);
    return Vec2(p[0], p[1]);
  };
  if (j.contains("vertices") == j.contains("edges")) w.fail("room needs exactly one of 'vertices' or 'edges'");
  if (j.contains("vertices")) {
    const Json& vs = j["vertices"];
    if (!vs.is_array() || vs.size() < 3) w.fail("'vertices' must list at least 3 points");
    for (std::size_t k = 0; k < vs.size(); ++k) {
      room.edges.emplace_back(Segment{vec2(vs[k], "vertices"), vec2(vs[(k + 1) % vs.size()], "vertices")});
    }
  } else {
    const Json& es = j["edges"];
    if (!es.is_array() || es.empty()) w.fail("'edges' must be a non-empty array");
    for (const auto& e : es) {
      if (!e.is_object()) w.fail("each edge must be an object");
      const std::string type = string_field(e, "type", w);
      if (type == "segment") {
        checker.check(e, {"type", "a", "b"}, "edges[]", 0);
        room.edges.emplace_back(Segment{vec2(field(e, "a", w), "a"), vec2(field(e, "b", w), "b")});
      } else if (type == "arc") {
        checker.check(e, {"type", "center", "radius", "start", "sweep"}, "edges[]", 0);
        Arc a{vec2(field(e, "center", w), "center"), number(field(e, "radius", w), "radius", w),
              number(field(e, "start", w), "start", w), number(field(e, "sweep", w), "sweep", w)};
        if (!(a.radius > 0.0) || !(a.sweep > 0.0)) w.fail("arc radius and sweep must be positive");
        room.edges.emplace_back(a);
      } else {
        w.fail("unknown edge type '" + type + "'");
      }
    }
  }
  located(w, [&] { room.validate(); return 0; });
  return room;
}

inline RoomSpec load_room(const std::string& path, const WarningSink& warn = warn_to_stderr) {
  return room_from_json(read_text(path), path, warn);
}

// ---------------------------------------------------------------------------
// Pipeline configuration

enum class LabelMethod { Raycast, MlcMedian };

inline const char* to_string(LabelMethod m) { return m == LabelMethod::Raycast ? "raycast" : "mlc-median"; }

inline std::optional<LabelMethod> parse_label_method(const std::string& s) {
  if (s == "raycast") return LabelMethod::Raycast;
  if (s == "mlc-median") return LabelMethod::MlcMedian;
  return std::nullopt;
}

struct PipelineConfig {
  std::size_t width = 1024;
  int image_height = kDefaultImageHeight;
  double camera_height = kDefaultCameraHeight;
  int views = 8;
  RayBandParams band;
  LossParams loss;
  NoiseModel noise;
  double raster_resolution = kDefaultRasterResolution;
  LabelMethod method = LabelMethod::Raycast;
  std::uint64_t seed = 0;
  ToyModelParams selftrain;

  void validate() const {
    require(width >= kMinWidth, ErrorKind::InvalidWidth, "width " + std::to_string(width) + " is below 4");
    require(image_height > 0, ErrorKind::InvalidArgument, "image_height must be positive");
    require(camera_height > 0.0 && std::isfinite(camera_height), ErrorKind::InvalidArgument,
            "camera_height must be positive");
    require(views >= 1, ErrorKind::InvalidArgument, "views must be >= 1");
    require(raster_resolution > 0.0 && std::isfinite(raster_resolution), ErrorKind::InvalidArgument,
            "eval.raster_resolution must be positive");
    band.validate();
    loss.validate();
    noise.validate();
    selftrain.validate();
  }
};

inline std::string config_to_json(const PipelineConfig& c) {
  OrderedJson j;
  j["schema_version"] = kConfigSchemaVersion;
  j["width"] = c.width;
  j["image_height"] = c.image_height;
  j["camera_height"] = c.camera_height;
  j["views"] = c.views;
  j["band"] = {{"delta_r", c.band.delta_r},
               {"delta_n", c.band.delta_n},
               {"cycles", c.band.cycles},
               {"widen_with_distance", c.band.widen_with_distance},
               {"filter_median", c.band.filter_median == MedianRule::UpperMiddle ? "upper" : "lower"}};
  j["loss"] = {{"kappa", c.loss.kappa},
               {"d_min", c.loss.d_min},
               {"huber_eps", c.loss.huber_eps},
               {"sigma_floor", c.loss.sigma_floor}};
  j["noise"] = {
      {"depth_sigma", c.noise.depth_sigma},
      {"smooth_window", c.noise.smooth_window},
      {"occlusion",
       {{"prob", c.noise.occlusion.prob},
        {"mode", c.noise.occlusion.mode == OcclusionMode::SeeThrough ? "see_through" : "inflate"},
        {"factor", c.noise.occlusion.factor}}},
      {"outlier", {{"prob", c.noise.outlier.prob}, {"scale", c.noise.outlier.scale}}},
      {"far_wall", {{"distance", c.noise.far.distance}, {"sigma", c.noise.far.sigma}}},
      {"rng_seed", c.noise.rng_seed}};
  j["eval"] = {{"raster_resolution", c.raster_resolution}};
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["selftrain"] = {{"learning_rate", c.selftrain.learning_rate},
                    {"steps", c.selftrain.steps},
                    {"lr_decay", c.selftrain.lr_decay},
                    {"steps_per_epoch", c.selftrain.steps_per_epoch},
                    {"max_backtracks", c.selftrain.max_backtracks}};
  return j.dump(2) + "\n";
}

/// Every field is optional; absent fields keep their defaults.
inline PipelineConfig config_from_json(const std::string& text, const std::string& path,
                                       const WarningSink& warn = warn_to_stderr) {
  using namespace detail;
  const Where w{path, 0};
  const Json j = parse_document(text, w);
  if (!j.is_object()) w.fail("config must be an object");
  FieldChecker checker(path, warn);
  checker.check(j, {"schema_version", "width", "image_height", "camera_height", "views", "band", "loss", "noise",
                    "eval", "method", "seed", "selftrain"},
                "", 0);
  PipelineConfig c;
  if (j.contains("schema_version") && integer(j["schema_version"], "schema_version", w) != kConfigSchemaVersion) {
    w.fail("unsupported schema_version (this build reads version " + std::to_string(kConfigSchemaVersion) + ")");
  }
  const long long width = integer_or(j, "width", static_cast<long long>(c.width), w);
  if (width < static_cast<long long>(kMinWidth)) w.fail("width must be >= 4");
  c.width = static_cast<std::size_t>(width);
  c.image_height = static_cast<int>(integer_or(j, "image_height", c.image_height, w));
  c.camera_height = number_or(j, "camera_height", c.camera_height, w);
  c.views = static_cast<int>(integer_or(j, "views", c.views, w));
  auto section = [&](const char* key, std::initializer_list<const char*> known) -> const Json* {
    if (!j.contains(key)) return nullptr;
    const Json& s = j[key];
    if (!s.is_object()) w.fail(std::string("'") + key + "' must be an object");
    checker.check(s, known, key, 0);
    return &s;
  };
  if (const Json* b = section("band", {"delta_r", "delta_n", "cycles", "widen_with_distance", "filter_median"})) {
    c.band.delta_r = number_or(*b, "delta_r", c.band.delta_r, w);
    c.band.delta_n = number_or(*b, "delta_n", c.band.delta_n, w);
    c.band.cycles = static_cast<int>(integer_or(*b, "cycles", c.band.cycles, w));
    if (b->contains("widen_with_distance")) {
      if (!(*b)["widen_with_distance"].is_boolean()) w.fail("'band.widen_with_distance' must be a boolean");
      c.band.widen_with_distance = (*b)["widen_with_distance"].get<bool>();
    }
    if (b->contains("filter_median")) {
      const std::string m = string_field(*b, "filter_median", w);
      if (m != "upper" && m != "lower") w.fail("'band.filter_median' must be upper or lower");
      c.band.filter_median = m == "upper" ? MedianRule::UpperMiddle : MedianRule::LowerMiddle;
    }
  }
  if (const Json* l = section("loss", {"kappa", "d_min", "huber_eps", "sigma_floor"})) {
    c.loss.kappa = number_or(*l, "kappa", c.loss.kappa, w);
    c.loss.d_min = number_or(*l, "d_min", c.loss.d_min, w);
    c.loss.huber_eps = number_or(*l, "huber_eps", c.loss.huber_eps, w);
    c.loss.sigma_floor = number_or(*l, "sigma_floor", c.loss.sigma_floor, w);
  }
  if (const Json* n = section("noise", {"depth_sigma", "smooth_window", "occlusion", "outlier", "far_wall",
                                        "rng_seed"})) {
    c.noise.depth_sigma = number_or(*n, "depth_sigma", c.noise.depth_sigma, w);
    c.noise.smooth_window = static_cast<int>(integer_or(*n, "smooth_window", c.noise.smooth_window, w));
    if (n->contains("rng_seed")) {
      const Json& s = (*n)["rng_seed"];
      if (!s.is_number_unsigned()) w.fail("'noise.rng_seed' must be a non-negative integer");
      c.noise.rng_seed = s.get<std::uint64_t>();
    }
    if (n->contains("occlusion")) {
      const Json& o = (*n)["occlusion"];
      if (!o.is_object()) w.fail("'noise.occlusion' must be an object");
      checker.check(o, {"prob", "mode", "factor"}, "noise.occlusion", 0);
      c.noise.occlusion.prob = number_or(o, "prob", c.noise.occlusion.prob, w);
      c.noise.occlusion.factor = number_or(o, "factor", c.noise.occlusion.factor, w);
      if (o.contains("mode")) {
        const std::string m = string_field(o, "mode", w);
        if (m == "see_through") {
          c.noise.occlusion.mode = OcclusionMode::SeeThrough;
        } else if (m == "inflate") {
          c.noise.occlusion.mode = OcclusionMode::Inflate;
        } else {
          w.fail("unknown occlusion mode '" + m + "' (expected see_through or inflate)");
        }
      }
    }
    if (n->contains("outlier")) {
      const Json& o = (*n)["outlier"];
      if (!o.is_object()) w.fail("'noise.outlier' must be an object");
      checker.check(o, {"prob", "scale"}, "noise.outlier", 0);
      c.noise.outlier.prob = number_or(o, "prob", c.noise.outlier.prob, w);
      c.noise.outlier.scale = number_or(o, "scale", c.noise.outlier.scale, w);
    }
    if (n->contains("far_wall")) {
      const Json& o = (*n)["far_wall"];
      if (!o.is_object()) w.fail("'noise.far_wall' must be an object");
      checker.check(o, {"distance", "sigma"}, "noise.far_wall", 0);
      c.noise.far.distance = number_or(o, "distance", c.noise.far.distance, w);
      c.noise.far.sigma = number_or(o, "sigma", c.noise.far.sigma, w);
    }
  }
  if (const Json* e = section("eval", {"raster_resolution"})) {
    c.raster_resolution = number_or(*e, "raster_resolution", c.raster_resolution, w);
  }
  if (j.contains("method")) {
    const auto m = parse_label_method(string_field(j, "method", w));
    if (!m) w.fail("unknown method '" + j["method"].get<std::string>() + "' (expected raycast or mlc-median)");
    c.method = *m;
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) w.fail("'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (const Json* s = section("selftrain", {"learning_rate", "steps", "lr_decay", "steps_per_epoch",
                                            "max_backtracks"})) {
    c.selftrain.learning_rate = number_or(*s, "learning_rate", c.selftrain.learning_rate, w);
    c.selftrain.steps = static_cast<int>(integer_or(*s, "steps", c.selftrain.steps, w));
    c.selftrain.lr_decay = number_or(*s, "lr_decay", c.selftrain.lr_decay, w);
    c.selftrain.steps_per_epoch = static_cast<int>(integer_or(*s, "steps_per_epoch", c.selftrain.steps_per_epoch, w));
    c.selftrain.max_backtracks = static_cast<int>(integer_or(*s, "max_backtracks", c.selftrain.max_backtracks, w));
  }
  located(w, [&] { c.validate(); return 0; });
  return c;
}

inline PipelineConfig load_config(const std::string& path, const WarningSink& warn = warn_to_stderr) {
  return config_from_json(read_text(path), path, warn);
}

// ---------------------------------------------------------------------------
// Reports and traces

inline std::string report_to_json(const EvalReport& r) {
  OrderedJson j;
  j["iou2d"] = r.iou2d;
  j["iou3d"] = r.iou3d;
  j["rms"] = r.rms;
  j["delta1"] = r.delta1;
  return j.dump() + "\n";
}

inline EvalReport report_from_json(const std::string& text, const std::string& path) {
  using namespace detail;
  const Where w{path, 0};
  const Json j = parse_document(text, w);
  if (!j.is_object()) w.fail("report must be an object");
  return {number(field(j, "iou2d", w), "iou2d", w), number(field(j, "iou3d", w), "iou3d", w),
          number(field(j, "rms", w), "rms", w), number(field(j, "delta1", w), "delta1", w)};
}

/// Fixed-order table, four decimals.
inline std::string report_table(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "metric  value\niou2d   %.4f\niou3d   %.4f\nrms     %.4f\ndelta1  %.4f\n",
                r.iou2d, r.iou3d, r.rms, r.delta1);
  return buf;
}

inline std::string trace_table(std::span<const double> trace) {
  std::string out = "step\tloss\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out += std::to_string(k) + "\t" + format_double(trace[k]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// BEV plot

struct BevPlot {
  std::vector<Vec2> room;                       // closed outline, optional
  std::vector<Vec2> cameras;
  std::vector<Vec2> registered;                 // registered boundary points
  std::vector<std::vector<Vec2>> labels;        // one polyline per view
  std::string title;
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Static SVG. World x runs right, world z runs up.
inline std::string bev_svg(const BevPlot& plot, double pixels = 800.0) {
  Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  auto grow = [&](const Vec2& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (const auto& p : plot.room) grow(p);
  for (const auto& p : plot.cameras) grow(p);
  for (const auto& p : plot.registered) grow(p);
  for (const auto& l : plot.labels)
    for (const auto& p : l) grow(p);
  if (!std::isfinite(lo.x())) {
    lo = Vec2(-1, -1);
    hi = Vec2(1, 1);
  }
  const double pad = 0.05 * std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
  lo.array() -= pad;
  hi.array() += pad;
  const double scale = pixels / std::max(hi.x() - lo.x(), hi.y() - lo.y());
  const double width = (hi.x() - lo.x()) * scale, height = (hi.y() - lo.y()) * scale;

  char buf[160];
  auto xy = [&](const Vec2& p) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", (p.x() - lo.x()) * scale, (hi.y() - p.y()) * scale);
    return std::string(buf);
  };
  auto points = [&](const std::vector<Vec2>& pts) {
    std::string s;
    for (const auto& p : pts) s += xy(p) + " ";
    if (!s.empty()) s.pop_back();
    return s;
  };

  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.2f %.2f\">\n",
                width, height, width, height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!plot.title.empty()) svg += "<title>" + xml_escape(plot.title) + "</title>\n";
  if (!plot.room.empty()) {
    svg += "<polygon points=\"" + points(plot.room) + "\" fill=\"#eeeeee\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  svg += "<g fill=\"#1f77b4\" fill-opacity=\"0.5\">\n";
  for (const auto& p : plot.registered) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1\"/>\n", (p.x() - lo.x()) * scale,
                  (hi.y() - p.y()) * scale);
    svg += buf;
  }
  svg += "</g>\n<g fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\">\n";
  for (const auto& l : plot.labels) {
    if (l.size() >= 2) svg += "<polygon points=\"" + points(l) + "\"/>\n";
  }
  svg += "</g>\n<g fill=\"#2ca02c\" stroke=\"black\">\n";
  for (const auto& p : plot.cameras) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\"/>\n", (p.x() - lo.x()) * scale,
                  (hi.y() - p.y()) * scale);
    svg += buf;
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace mlc
