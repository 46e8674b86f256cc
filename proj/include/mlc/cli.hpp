#pragma once

// `mlc` command line: gen-scene, estimate, pseudo-label, self-train, eval,
// plot-bev. Every subcommand computes and validates everything before it
// writes its first output file.
//
// Exit status: 0 success, 1 validation or usage error, 2 I/O error.

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlc/io.hpp"

namespace mlc {

namespace cli_detail {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
};

inline void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  sub->add_option("--config", c.config, "pipeline config (JSON); defaults apply when omitted");
  sub->add_option("--seed", c.seed, "overrides the config seed and noise seed");
  auto* out = sub->add_option("--out", c.out, "output path");
  if (out_required) out->required();
  sub->add_option("--threads", c.threads, "worker threads (0: MLC_THREADS or hardware)");
}

inline PipelineConfig resolve_config(const Common& c, const WarningSink& warn) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config, warn);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.noise.rng_seed = *c.seed;
  }
  return cfg;
}

/// scene.jsonl -> scene.gt.jsonl
inline std::string gt_sidecar_path(const std::string& out) {
  const std::string ext = ".jsonl";
  if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0) {
    return out.substr(0, out.size() - ext.size()) + ".gt.jsonl";
  }
  return out + ".gt";
}

inline EvalOptions eval_options(const PipelineConfig& cfg, const Scene& gt) {
  return {cfg.raster_resolution, gt.ceiling_height.value_or(2.5)};
}

inline void check_pairing(const Scene& a, const std::vector<std::string>& ids, const std::string& what) {
  require(ids.size() == a.views.size(), ErrorKind::InvalidArgument,
          what + " has " + std::to_string(ids.size()) + " views, scene has " + std::to_string(a.views.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] == a.views[i].layout.view_id, ErrorKind::InvalidArgument,
            what + " view '" + ids[i] + "' does not match scene view '" + a.views[i].layout.view_id + "'");
  }
}

inline std::vector<std::string> view_ids(const Scene& s) {
  std::vector<std::string> ids;
  for (const auto& v : s.views) ids.push_back(v.layout.view_id);
  return ids;
}

inline std::vector<std::string> view_ids(const LabelSet& s) {
  std::vector<std::string> ids;
  for (const auto& l : s.labels) ids.push_back(l.view_id);
  return ids;
}

inline LabelSet make_labels(const Scene& scene, const PipelineConfig& cfg, unsigned threads) {
  LabelSet set;
  set.scene_id = scene.scene_id;
  set.repr = scene.views.front().layout.repr;
  set.band = cfg.band;
  set.labels = cfg.method == LabelMethod::Raycast ? raycast_pseudo_labels(scene, cfg.band, threads)
                                                  : median_pseudo_labels(scene, threads);
  return set;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  const WarningSink warn = [&err](const std::string& m) { err << "warning: " << m << '\n'; };

  CLI::App app{"Multi-view layout consistency: pseudo-labels by ray casting, self-training, evaluation", "mlc"};
  app.set_version_flag("--version", "mlc config schema " + std::to_string(kConfigSchemaVersion));
  app.require_subcommand(1);

  Common gen_c, est_c, pl_c, st_c, ev_c, plot_c;
  std::string room_path, gt_path, scene_path, labels_path, method, trace_path;
  std::optional<int> n_views;

  auto* gen = app.add_subcommand("gen-scene", "room file -> simulated scene plus noise-free sidecar");
  add_common(gen, gen_c);
  gen->add_option("--room", room_path, "room file (JSON)")->required();
  gen->add_option("--views", n_views, "number of cameras (overrides config)");

  auto* est = app.add_subcommand("estimate", "ground-truth scene -> noisy estimates at the same poses");
  add_common(est, est_c);
  est->get_option("--config")->required();
  est->add_option("--gt", gt_path, "ground-truth scene file")->required();
  est->add_option("--room", room_path, "room file the scene was generated from")->required();

  auto* pl = app.add_subcommand("pseudo-label", "scene -> pseudo-labels");
  add_common(pl, pl_c);
  pl->add_option("--scene", scene_path, "scene file")->required();
  pl->add_option("--method", method, "raycast or mlc-median (overrides config)")
      ->check(CLI::IsMember({"raycast", "mlc-median"}));

  auto* st = app.add_subcommand("self-train", "scene + pseudo-labels -> trained views and loss trace");
  add_common(st, st_c);
  st->add_option("--scene", scene_path, "scene file")->required();
  st->add_option("--labels", labels_path, "pseudo-label file")->required();
  st->add_option("--trace", trace_path, "loss-trace table path (printed when omitted)");

  auto* ev = app.add_subcommand("eval", "views or pseudo-labels vs ground truth");
  add_common(ev, ev_c, false);
  ev->add_option("--gt", gt_path, "ground-truth scene file")->required();
  auto* ev_scene = ev->add_option("--scene", scene_path, "scene file to evaluate");
  auto* ev_labels = ev->add_option("--labels", labels_path, "pseudo-label file to evaluate");
  ev_scene->excludes(ev_labels);

  auto* plot = app.add_subcommand("plot-bev", "bird's-eye SVG of a scene, its labels and room");
  add_common(plot, plot_c);
  plot->add_option("--scene", scene_path, "scene file")->required();
  plot->add_option("--labels", labels_path, "pseudo-label file to overlay");
  plot->add_option("--room", room_path, "room file to outline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) {
      auto cfg = resolve_config(gen_c, warn);
      if (n_views) cfg.views = *n_views;
      cfg.validate();
      const RoomSpec room = load_room(room_path, warn);
      const auto poses = generate_scene(room, cfg.views, cfg.seed);
      const Scene scene = make_scene(room, poses, cfg.width, cfg.camera_height, cfg.noise, gen_c.threads);
      const Scene gt = make_scene(room, poses, cfg.width, cfg.camera_height, NoiseModel{}, gen_c.threads);
      const std::string scene_text = scene_to_jsonl(scene), gt_text = scene_to_jsonl(gt);
      write_text(gen_c.out, scene_text);
      write_text(gt_sidecar_path(gen_c.out), gt_text);
      return 0;
    }

    if (est->parsed()) {
      const auto cfg = resolve_config(est_c, warn);
      const RoomSpec room = load_room(room_path, warn);
      const Scene gt = load_scene(gt_path, warn);
      Scene scene{gt.scene_id, std::vector<SceneView>(gt.views.size()), gt.ceiling_height};
      parallel_for(gt.views.size(), est_c.threads, [&](std::size_t i) {
        const auto& g = gt.views[i];
        scene.views[i].pose = g.pose;
        scene.views[i].layout = simulate_view(room, g.pose, g.layout.width(), g.layout.camera_height, cfg.noise,
                                              g.layout.view_id);
        scene.views[i].layout.image_height = g.layout.image_height;
      });
      write_text(est_c.out, scene_to_jsonl(scene));
      return 0;
    }

    if (pl->parsed()) {
      auto cfg = resolve_config(pl_c, warn);
      if (!method.empty()) cfg.method = *parse_label_method(method);
      const Scene scene = load_scene(scene_path, warn);
      write_text(pl_c.out, labels_to_jsonl(make_labels(scene, cfg, pl_c.threads)));
      return 0;
    }

    if (st->parsed()) {
      const auto cfg = resolve_config(st_c, warn);
      const Scene scene = load_scene(scene_path, warn);
      const LabelSet labels = load_labels(labels_path, warn);
      check_pairing(scene, view_ids(labels), "label file");
      const auto result = selftrain(scene, labels.labels, cfg.selftrain, cfg.loss, st_c.threads);
      Scene trained = scene;
      for (std::size_t i = 0; i < trained.views.size(); ++i) trained.views[i].layout = result.views[i];
      const std::string scene_text = scene_to_jsonl(trained), trace = trace_table(result.loss_trace);
      write_text(st_c.out, scene_text);
      if (trace_path.empty()) {
        out << trace;
      } else {
        write_text(trace_path, trace);
      }
      return 0;
    }

    if (ev->parsed()) {
      const auto cfg = resolve_config(ev_c, warn);
      require(!scene_path.empty() || !labels_path.empty(), ErrorKind::InvalidArgument,
              "eval needs --scene or --labels");
      const Scene gt = load_scene(gt_path, warn);
      EvalReport report;
      if (!scene_path.empty()) {
        const Scene pred = load_scene(scene_path, warn);
        check_pairing(gt, view_ids(pred), "scene file");
        report = evaluate_views(pred, gt, eval_options(cfg, gt));
      } else {
        const LabelSet labels = load_labels(labels_path, warn);
        check_pairing(gt, view_ids(labels), "label file");
        report = evaluate_labels(labels.labels, gt, eval_options(cfg, gt));
      }
      if (!ev_c.out.empty()) write_text(ev_c.out, report_to_json(report));
      out << report_table(report);
      return 0;
    }

    if (plot->parsed()) {
      resolve_config(plot_c, warn);
      const Scene scene = load_scene(scene_path, warn);
      BevPlot p;
      p.title = scene.scene_id;
      if (!room_path.empty()) p.room = load_room(room_path, warn).outline();
      for (const auto& v : scene.views) p.cameras.push_back(to_bev(v.pose.center()));
      for (const auto& tp : register_scene(scene).points) p.registered.push_back(to_bev(tp.position));
      if (!labels_path.empty()) {
        const LabelSet labels = load_labels(labels_path, warn);
        check_pairing(scene, view_ids(labels), "label file");
        for (std::size_t i = 0; i < labels.labels.size(); ++i) {
          p.labels.push_back(label_polygon(labels.labels[i], scene.views[i].pose));
        }
      }
      write_text(plot_c.out, bev_svg(p));
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Io ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace mlc
