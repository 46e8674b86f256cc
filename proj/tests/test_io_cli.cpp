#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "mlc/cli.hpp"
#include "mlc/io.hpp"
#include "support.hpp"

using namespace mlc;
using testing_support::uniform;
namespace fs = std::filesystem;

namespace {

const std::string kSamples = MLC_SAMPLES_DIR;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("mlc_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mlc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Scene random_scene(std::uint64_t seed, std::size_t width, int views) {
  std::mt19937_64 rng(seed);
  Scene s{"scene_" + std::to_string(seed), {}, 2.7};
  for (int i = 0; i < views; ++i) {
    LayoutView v{default_view_id(i), Representation::HorizonDepth, {}, uniform(rng, 1.2, 1.9), 512};
    for (std::size_t j = 0; j < width; ++j) v.values.push_back(uniform(rng, 0.3, 9.0));
    v.values[0] = 0.1 + 0.2;
    s.views.push_back({v, Pose::from_center_yaw({uniform(rng, -3, 3), 0.0, uniform(rng, -3, 3)}, uniform(rng, -3, 3))});
  }
  return s;
}

LabelSet random_labels(std::uint64_t seed, std::size_t width, int views) {
  std::mt19937_64 rng(seed);
  LabelSet set{"labels", Representation::HorizonDepth, RayBandParams{}, {}};
  for (int i = 0; i < views; ++i) {
    PseudoLabel l{default_view_id(i), {}, {}};
    for (std::size_t j = 0; j < width; ++j) {
      const bool valid = j % 5 != 2;
      l.points.push_back(valid ? std::optional<Vec3>(Vec3(uniform(rng, -5, 5), -1.6, uniform(rng, -5, 5)))
                               : std::nullopt);
      l.sigma.push_back(valid ? std::optional<double>(uniform(rng, 0, 1)) : std::nullopt);
    }
    set.labels.push_back(std::move(l));
  }
  return set;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

void write_config(const std::string& path, const std::string& body) { write_text(path, body); }

}  // namespace

TEST(SceneFile, RoundTripIsBitExact) {
  const Scene s = random_scene(1, 64, 3);
  const std::string text = scene_to_jsonl(s);
  const Scene back = scene_from_jsonl(text, "mem");
  ASSERT_EQ(back.views.size(), 3u);
  EXPECT_EQ(back.scene_id, s.scene_id);
  EXPECT_EQ(back.ceiling_height, s.ceiling_height);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.views[i].layout.view_id, s.views[i].layout.view_id);
    EXPECT_EQ(back.views[i].layout.values, s.views[i].layout.values);
    EXPECT_EQ(back.views[i].layout.camera_height, s.views[i].layout.camera_height);
    EXPECT_EQ(back.views[i].pose.rotation(), s.views[i].pose.rotation());
    EXPECT_EQ(back.views[i].pose.translation(), s.views[i].pose.translation());
  }
  EXPECT_EQ(scene_to_jsonl(back), text);
}

TEST(SceneFile, RoundTripThroughDisk) {
  TempDir dir;
  Scene s = random_scene(2, 32, 2);
  for (auto& sv : s.views) {
    for (auto& x : sv.layout.values) x = std::atan2(sv.layout.camera_height, x);
    sv.layout.repr = Representation::SphericalBoundary;
  }
  save_scene(dir / "s.jsonl", s);
  const Scene back = load_scene(dir / "s.jsonl");
  EXPECT_EQ(back.views[1].layout.repr, Representation::SphericalBoundary);
  EXPECT_EQ(back.views[1].layout.values, s.views[1].layout.values);
}

TEST(SceneFile, TruncatedLineIsReportedWithItsNumber) {
  auto lines = lines_of(scene_to_jsonl(random_scene(3, 16, 4)));
  lines[2] = lines[2].substr(0, lines[2].size() / 2);
  try {
    scene_from_jsonl(join_lines(lines), "scene.jsonl");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("scene.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST(SceneFile, UnknownFieldWarnsOnce) {
  auto lines = lines_of(scene_to_jsonl(random_scene(4, 16, 3)));
  for (auto& l : lines) l.insert(1, "\"note\":\"hand edited\",");
  std::vector<std::string> warnings;
  const Scene s = scene_from_jsonl(join_lines(lines), "scene.jsonl",
                                   [&](const std::string& m) { warnings.push_back(m); });
  EXPECT_EQ(s.views.size(), 3u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("note"), std::string::npos);
}

TEST(SceneFile, Rejections) {
  const std::string good = scene_to_jsonl(random_scene(5, 16, 2));
  EXPECT_MLC_ERROR(scene_from_jsonl("", "e"), ErrorKind::EmptyScene);
  EXPECT_MLC_ERROR(scene_from_jsonl("\n\n", "e"), ErrorKind::EmptyScene);
  auto lines = lines_of(good);
  lines.push_back(lines[0]);
  EXPECT_MLC_ERROR(scene_from_jsonl(join_lines(lines), "dup"), ErrorKind::Parse);

  Scene s = random_scene(5, 16, 2);
  s.views[1].layout.values.resize(8);
  EXPECT_MLC_ERROR(scene_from_jsonl(scene_to_jsonl(s), "w"), ErrorKind::Parse);

  auto bad = lines_of(good);
  const auto at = bad[0].find("\"repr\":\"") + 8;
  bad[0].replace(at, bad[0].find('"', at) - at, "cubemap");
  EXPECT_MLC_ERROR(scene_from_jsonl(join_lines(bad), "r"), ErrorKind::Parse);

  Scene neg = random_scene(5, 16, 1);
  neg.views[0].layout.values[3] = -1.0;
  try {
    scene_from_jsonl(scene_to_jsonl(neg), "n.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RepresentationDomain);
    EXPECT_EQ(e.message().rfind("n.jsonl:1: ", 0), 0u) << e.what();
  }
  EXPECT_MLC_ERROR(load_scene("/nonexistent/dir/scene.jsonl"), ErrorKind::Io);
}

TEST(LabelFile, RoundTripIsBitExact) {
  const LabelSet set = random_labels(6, 20, 3);
  const std::string text = labels_to_jsonl(set);
  const LabelSet back = labels_from_jsonl(text, "mem");
  ASSERT_EQ(back.labels.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.labels[i].view_id, set.labels[i].view_id);
    EXPECT_EQ(back.labels[i].sigma, set.labels[i].sigma);
    for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(back.labels[i].points[j], set.labels[i].points[j]);
  }
  EXPECT_EQ(back.band.delta_r, set.band.delta_r);
  EXPECT_EQ(back.band.cycles, set.band.cycles);
  EXPECT_EQ(labels_to_jsonl(back), text);
}

TEST(LabelFile, InconsistentValidityIsRejected) {
  auto lines = lines_of(labels_to_jsonl(random_labels(7, 10, 2)));
  const auto at = lines[1].find("\"valid\":[") + 9;
  lines[1].replace(at, 4, "fals");  // first column becomes "falss..." or a false flag
  EXPECT_MLC_ERROR(labels_from_jsonl(join_lines(lines), "labels.jsonl"), ErrorKind::Parse);

  LabelSet set = random_labels(7, 10, 1);
  set.labels[0].sigma[0] = -0.5;
  EXPECT_MLC_ERROR(labels_from_jsonl(labels_to_jsonl(set), "neg"), ErrorKind::Parse);
}

TEST(ConfigFile, EmptyObjectGivesDefaults) {
  const PipelineConfig c = config_from_json("{}", "c.json");
  const PipelineConfig d;
  EXPECT_EQ(c.width, 1024u);
  EXPECT_EQ(c.views, d.views);
  EXPECT_EQ(c.band.delta_r, d.band.delta_r);
  EXPECT_EQ(c.band.filter_median, MedianRule::UpperMiddle);
  EXPECT_EQ(c.loss.kappa, 0.5);
  EXPECT_EQ(c.loss.d_min, 2.0);
  EXPECT_EQ(c.method, LabelMethod::Raycast);
  EXPECT_EQ(c.selftrain.learning_rate, 1e-4);
  EXPECT_EQ(c.raster_resolution, 0.01);
}

TEST(ConfigFile, RoundTrip) {
  PipelineConfig c;
  c.width = 256;
  c.band.delta_n = 0.02;
  c.band.cycles = 3;
  c.band.filter_median = MedianRule::LowerMiddle;
  c.loss.huber_eps = 0.05;
  c.noise.depth_sigma = 0.04;
  c.noise.occlusion = {0.5, OcclusionMode::Inflate, 1.3};
  c.noise.far = {3.0, 0.1};
  c.noise.rng_seed = 99;
  c.method = LabelMethod::MlcMedian;
  c.seed = 12;
  c.selftrain.steps = 7;
  const PipelineConfig b = config_from_json(config_to_json(c), "c.json");
  EXPECT_EQ(config_to_json(b), config_to_json(c));
  EXPECT_EQ(b.band.filter_median, MedianRule::LowerMiddle);
  EXPECT_EQ(b.noise.occlusion.mode, OcclusionMode::Inflate);
  EXPECT_EQ(b.method, LabelMethod::MlcMedian);
}

TEST(ConfigFile, Rejections) {
  EXPECT_MLC_ERROR(config_from_json(R"({"schema_version": 2})", "c"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(config_from_json(R"({"method": "voting"})", "c"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(config_from_json(R"({"band": {"delta_r": -1}})", "c"), ErrorKind::InvalidArgument);
  EXPECT_MLC_ERROR(config_from_json(R"({"width": 2})", "c"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(config_from_json(R"({"width": "wide"})", "c"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(config_from_json("{\n\"views\": 3,\n", "c.json"), ErrorKind::Parse);
  try {
    config_from_json("{\n\"views\": 3,\n\"seed\": }", "c.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("c.json:3"), std::string::npos) << e.what();
  }
  std::vector<std::string> warnings;
  config_from_json(R"({"loss": {"kappa": 1, "gamma": 2}, "colour": 1})", "c",
                   [&](const std::string& m) { warnings.push_back(m); });
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[0].find("colour"), std::string::npos);
  EXPECT_NE(warnings[1].find("loss.gamma"), std::string::npos);
}

TEST(RoomFile, SamplesLoad) {
  const RoomSpec l = load_room(kSamples + "/rooms/lshape.json");
  EXPECT_EQ(l.edges.size(), 6u);
  EXPECT_EQ(l.ceiling_height, 2.5);
  const RoomSpec a = load_room(kSamples + "/rooms/apse.json");
  EXPECT_TRUE(std::any_of(a.edges.begin(), a.edges.end(), [](const Edge& e) { return std::holds_alternative<Arc>(e); }));
}

TEST(RoomFile, RoundTripAndRejections) {
  const RoomSpec r = make_apse_room(5.0, 6.0);
  const RoomSpec back = room_from_json(room_to_json(r), "room.json");
  EXPECT_EQ(room_to_json(back), room_to_json(r));
  EXPECT_MLC_ERROR(room_from_json(R"({"vertices": [[0,0],[1,0]]})", "r"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(room_from_json(R"({"vertices": [[0,0],[3,0],[0,3]], "edges": []})", "r"), ErrorKind::Parse);
  EXPECT_MLC_ERROR(room_from_json(R"({"vertices": [[0,0],[0.5,0],[0,0.5]]})", "r"), ErrorKind::InvalidArgument);
  EXPECT_MLC_ERROR(room_from_json(R"({"shape": "dome", "vertices": [[0,0],[3,0],[0,3]]})", "r"), ErrorKind::Parse);
  EXPECT_NO_THROW(room_from_json(R"({"vertices": [[0,0],[3,0],[3,3],[0,3]]})", "r"));
}

TEST(Report, JsonAndTable) {
  const EvalReport r{0.91234567, 0.8, 0.123456, 1.0};
  const EvalReport b = report_from_json(report_to_json(r), "r");
  EXPECT_EQ(b.iou2d, r.iou2d);
  EXPECT_EQ(b.rms, r.rms);
  EXPECT_EQ(report_table(r), "metric  value\niou2d   0.9123\niou3d   0.8000\nrms     0.1235\ndelta1  1.0000\n");
  const std::vector<double> trace = {3.0, 0.1};
  EXPECT_EQ(trace_table(trace), "step\tloss\n0\t3\n1\t0.1\n");
}

TEST(Svg, ContainsLayers) {
  BevPlot p;
  p.room = make_rect(4, 5).outline();
  p.cameras = {{0, 0}};
  p.registered = {{1, 1}, {-1, 1}};
  p.labels = {{{0, 0}, {1, 0}, {1, 1}}};
  p.title = "a<b";
  const std::string svg = bev_svg(p);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
}

TEST(Cli, VersionAndUsage) {
  auto r = cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("schema 1"), std::string::npos);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"gen-scene", "--room", "x", "--out", "y", "--frobnicate"}).code, 1);
  r = cli({"pseudo-label", "--scene", "s.jsonl", "--out", "l.jsonl", "--method", "voting"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, EstimateRequiresConfig) {
  const auto r = cli({"estimate", "--gt", "g.jsonl", "--room", "r.json", "--out", "o.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--config"), std::string::npos) << r.err;
}

TEST(Cli, MissingInputIsAnIoError) {
  TempDir dir;
  const auto r = cli({"pseudo-label", "--scene", dir / "missing.jsonl", "--out", dir / "l.jsonl"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.jsonl"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "l.jsonl"));
}

TEST(Cli, ZeroNoisePipeline) {
  TempDir dir;
  write_config(dir / "cfg.json", R"({"width": 256, "views": 4, "seed": 5})");
  ASSERT_EQ(cli({"gen-scene", "--room", kSamples + "/rooms/lshape.json", "--config", dir / "cfg.json", "--out",
                 dir / "scene.jsonl"}).code, 0);
  ASSERT_TRUE(fs::exists(dir / "scene.gt.jsonl"));
  EXPECT_EQ(read_text(dir / "scene.jsonl"), read_text(dir / "scene.gt.jsonl"));
  ASSERT_EQ(cli({"pseudo-label", "--scene", dir / "scene.jsonl", "--config", dir / "cfg.json", "--out",
                 dir / "labels.jsonl"}).code, 0);
  const auto r = cli({"eval", "--gt", dir / "scene.gt.jsonl", "--labels", dir / "labels.jsonl", "--out",
                      dir / "report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("metric  value\niou2d   ", 0), 0u);
  const EvalReport rep = report_from_json(read_text(dir / "report.json"), "report.json");
  // A few rays grazing the re-entrant corner pick up the nearer wall end;
  // area and ratio metrics stay close to perfect.
  EXPECT_GT(rep.iou2d, 0.97);
  EXPECT_GT(rep.delta1, 0.98);
}

TEST(Cli, RaycastBeatsMedianOnOccludedScene) {
  TempDir dir;
  write_config(dir / "cfg.json",
               R"({"width": 256, "views": 6, "noise": {"depth_sigma": 0.03, "occlusion": {"prob": 0.8}},
                   "selftrain": {"learning_rate": 1.0, "steps": 20}})");
  const std::string cfg = dir / "cfg.json";
  ASSERT_EQ(cli({"gen-scene", "--room", kSamples + "/rooms/lshape.json", "--config", cfg, "--seed", "3", "--out",
                 dir / "scene.jsonl"}).code, 0);
  for (const std::string m : {"raycast", "mlc-median"}) {
    ASSERT_EQ(cli({"pseudo-label", "--scene", dir / "scene.jsonl", "--config", cfg, "--method", m, "--out",
                   dir / (m + ".jsonl")}).code, 0);
    ASSERT_EQ(cli({"eval", "--gt", dir / "scene.gt.jsonl", "--labels", dir / (m + ".jsonl"), "--out",
                   dir / (m + ".report.json")}).code, 0);
  }
  const auto ray = report_from_json(read_text(dir / "raycast.report.json"), "r");
  const auto med = report_from_json(read_text(dir / "mlc-median.report.json"), "m");
  EXPECT_LE(ray.rms, med.rms);

  const auto st = cli({"self-train", "--scene", dir / "scene.jsonl", "--labels", dir / "raycast.jsonl", "--config",
                       cfg, "--out", dir / "trained.jsonl"});
  ASSERT_EQ(st.code, 0) << st.err;
  const auto trace = lines_of(st.out);
  ASSERT_EQ(trace.size(), 22u);
  EXPECT_EQ(trace[0], "step\tloss");
  ASSERT_EQ(cli({"plot-bev", "--scene", dir / "trained.jsonl", "--labels", dir / "raycast.jsonl", "--room",
                 kSamples + "/rooms/lshape.json", "--out", dir / "bev.svg"}).code, 0);
  EXPECT_NE(read_text(dir / "bev.svg").find("</svg>"), std::string::npos);
}

TEST(Cli, EstimateReproducesGenScene) {
  TempDir dir;
  write_config(dir / "cfg.json", R"({"width": 128, "views": 3, "noise": {"depth_sigma": 0.05}})");
  const std::string room = kSamples + "/rooms/apse.json", cfg = dir / "cfg.json";
  ASSERT_EQ(cli({"gen-scene", "--room", room, "--config", cfg, "--seed", "8", "--out", dir / "a.jsonl"}).code, 0);
  ASSERT_EQ(cli({"estimate", "--gt", dir / "a.gt.jsonl", "--room", room, "--config", cfg, "--seed", "8", "--out",
                 dir / "b.jsonl"}).code, 0);
  EXPECT_EQ(read_text(dir / "a.jsonl"), read_text(dir / "b.jsonl"));
}

TEST(Cli, ValidationFailureWritesNothing) {
  TempDir dir;
  write_config(dir / "cfg.json", R"({"width": 64, "views": 3})");
  write_config(dir / "bad.json", R"({"width": 64, "views": 3, "band": {"cycles": -1}})");
  const std::string room = kSamples + "/rooms/lshape.json";
  auto r = cli({"gen-scene", "--room", room, "--config", dir / "bad.json", "--out", dir / "s.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "s.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "s.gt.jsonl"));

  ASSERT_EQ(cli({"gen-scene", "--room", room, "--config", dir / "cfg.json", "--out", dir / "s.jsonl"}).code, 0);
  ASSERT_EQ(cli({"pseudo-label", "--scene", dir / "s.jsonl", "--out", dir / "l.jsonl"}).code, 0);
  auto lines = lines_of(read_text(dir / "l.jsonl"));
  lines.pop_back();
  write_text(dir / "short.jsonl", join_lines(lines));
  r = cli({"self-train", "--scene", dir / "s.jsonl", "--labels", dir / "short.jsonl", "--out", dir / "t.jsonl",
           "--trace", dir / "trace.tsv"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "t.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "trace.tsv"));
}
