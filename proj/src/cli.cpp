// SPDX-License-Identifier: Apache-2.0
#include "groundlens/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "groundlens/metrics.hpp"
#include "groundlens/parallel.hpp"
#include "groundlens/volume_io.hpp"
#include "json.hpp"

namespace groundlens {

namespace {

using ojson = nlohmann::ordered_json;

/// Maps an exception from a whole-command step to an exit code.
int report_error(std::ostream& err, const std::exception& e) {
  err << "error: " << e.what() << "\n";
  return dynamic_cast<const IoError*>(&e) != nullptr ? kExitIo : kExitUsage;
}

std::string frame_file(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03d.png", t);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("missing dataset manifest " + path.string());
  return load_dataset_manifest(path);
}

void print_failures(std::ostream& err, const std::vector<ClipFailure>& failures) {
  for (const auto& f : failures) err << "failed: " << f.clip_id << ": " << f.reason << "\n";
}

ojson frame_metrics_json(const FrameMetrics& f) {
  return ojson{{"frame", f.frame}, {"tiers", f.tiers.label()}, {"energy", f.energy},
               {"pointing", f.pointing}, {"s_iou", f.s_iou}};
}

ojson clip_metrics_json(const ClipMetrics& c) {
  return ojson{{"tiers", c.tiers.label()},           {"t_iou", c.t_iou},
               {"t_gt", c.t_gt},                     {"t_pred", c.t_pred},
               {"predicted_class", c.predicted_class}, {"true_class", c.true_class},
               {"correct", c.correct}};
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_gen_toy(const GenToyOptions& options, std::ostream& out, std::ostream& err) {
  try {
    options.fixture.model.validate();
    if (options.fixture.clips < 0) throw Error("--clips must be >= 0");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const FixtureResult r = generate_fixtures(options.fixture, options.out);
    out << r.manifest_path.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_propagate(const PropagateOptions& options, std::ostream& out, std::ostream& err) {
  DatasetManifest manifest;
  try {
    manifest = load_manifest(options.manifest);
  } catch (const std::exception& e) {
    return report_error(err, e);
  }

  const std::size_t n = manifest.clips.size();
  std::vector<std::optional<RelevanceVolume>> volumes(n);
  std::vector<std::string> errors(n);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    const ClipEntry& entry = manifest.clips[i];
    try {
      const AttentionTrace trace = read_trace(entry.trace);
      if (trace.clip_id != entry.clip_id)
        throw Error("trace clip_id '" + trace.clip_id + "' does not match the manifest");
      RelevanceVolume v = attribute(trace, options.method);
      v.clip_id = entry.clip_id;
      volumes[i] = std::move(v);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  VolumeSet set;
  set.method = options.method;
  for (std::size_t i = 0; i < n; ++i) {
    if (volumes[i])
      set.volumes.push_back(std::move(*volumes[i]));
    else
      set.failures.push_back(ClipFailure{manifest.clips[i].clip_id, errors[i]});
  }
  try {
    write_volumes(set, options.out);
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  std::sort(set.failures.begin(), set.failures.end(),
            [](const ClipFailure& a, const ClipFailure& b) { return a.clip_id < b.clip_id; });
  print_failures(err, set.failures);
  out << "propagated " << set.volumes.size() << " of " << n << " clips (" << to_string(options.method) << ") into "
      << options.out.string() << "\n";
  return set.failures.empty() ? kExitOk : kExitPartial;
}

int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err) {
  DatasetManifest manifest;
  VolumeSet volumes;
  try {
    manifest = load_manifest(options.manifest);
    volumes = read_volumes(options.volumes);
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  if (manifest.clips.empty()) {
    err << "error: the dataset manifest lists no clips\n";
    return kExitUsage;
  }
  std::vector<TierSet> tiers = options.tiers;
  if (tiers.empty()) {
    const auto all = tier_sets();
    tiers.assign(all.begin(), all.end());
  }

  std::map<std::string, const RelevanceVolume*> by_id;
  for (const auto& v : volumes.volumes) by_id[v.clip_id] = &v;
  std::map<std::string, std::string> upstream;
  for (const auto& f : volumes.failures) upstream[f.clip_id] = f.reason;

  std::vector<ClipEntry> clips = manifest.clips;
  std::sort(clips.begin(), clips.end(), [](const ClipEntry& a, const ClipEntry& b) { return a.clip_id < b.clip_id; });
  const std::size_t n = clips.size();
  std::vector<std::optional<ClipEvaluation>> results(n);
  std::vector<std::string> errors(n);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    const ClipEntry& entry = clips[i];
    try {
      const auto it = by_id.find(entry.clip_id);
      if (it == by_id.end()) {
        const auto up = upstream.find(entry.clip_id);
        throw Error(up != upstream.end() ? "no volume (propagation failed: " + up->second + ")"
                                         : "no relevance volume for this clip");
      }
      const RelevanceVolume& volume = *it->second;
      const ClipAnnotation annotation = load_annotations(entry.annotation, manifest.classes, volume.frames);
      const AttentionTrace trace = read_trace(entry.trace);
      results[i] = evaluate_clip(volume, annotation, trace.logits, manifest.classes, tiers);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<FrameMetrics> frames;
  std::vector<ClipMetrics> clip_metrics;
  std::vector<ClipFailure> failures;
  ojson per_clip = ojson::object();
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) {
      failures.push_back(ClipFailure{clips[i].clip_id, errors[i]});
      continue;
    }
    ojson fj = ojson::array(), cj = ojson::array();
    for (const auto& f : results[i]->frames) fj.push_back(frame_metrics_json(f));
    for (const auto& c : results[i]->clips) cj.push_back(clip_metrics_json(c));
    per_clip[clips[i].clip_id] = ojson{{"frames", fj}, {"clip", cj}};
    frames.insert(frames.end(), results[i]->frames.begin(), results[i]->frames.end());
    clip_metrics.insert(clip_metrics.end(), results[i]->clips.begin(), results[i]->clips.end());
  }
  print_failures(err, failures);
  if (clip_metrics.empty()) {
    err << "error: no clip could be evaluated\n";
    return kExitPartial;
  }

  try {
    const GroundingReport report =
        aggregate(frames, clip_metrics, manifest, tiers, std::string(to_string(volumes.method)));
    ensure_dir(options.out);
    write_text(options.out / "report.json", report_to_json(report));
    write_text(options.out / "report.txt", render_tables(std::span<const GroundingReport>(&report, 1)));
    ojson failures_json = ojson::array();
    for (const auto& f : failures) failures_json.push_back(ojson{{"clip_id", f.clip_id}, {"reason", f.reason}});
    write_text(options.out / "clip_metrics.json",
               ojson{{"clips", per_clip}, {"failures", failures_json}}.dump(2) + "\n");
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  out << "evaluated " << (n - failures.size()) << " of " << n << " clips; report in " << options.out.string() << "\n";
  return failures.empty() ? kExitOk : kExitPartial;
}

int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err) {
  if (!(options.overlay.alpha >= 0.0 && options.overlay.alpha <= 1.0)) {
    err << "error: --alpha must lie in [0, 1]\n";
    return kExitUsage;
  }
  DatasetManifest manifest;
  VolumeSet volumes;
  try {
    manifest = load_manifest(options.manifest);
    volumes = read_volumes(options.volumes);
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  std::map<std::string, const RelevanceVolume*> by_id;
  for (const auto& v : volumes.volumes) by_id[v.clip_id] = &v;

  const std::size_t n = manifest.clips.size();
  std::vector<std::string> errors(n);
  std::vector<std::size_t> written(n, 0);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    const ClipEntry& entry = manifest.clips[i];
    try {
      const auto it = by_id.find(entry.clip_id);
      if (it == by_id.end()) throw Error("no relevance volume for this clip");
      if (!entry.frames_dir) throw Error("no frames_dir in the dataset manifest");
      const RelevanceVolume& volume = *it->second;
      const ClipAnnotation annotation = load_annotations(entry.annotation, manifest.classes, volume.frames);

      // Decode everything first so a missing image leaves no partial output.
      std::vector<std::pair<int, Image>> images;
      for (const auto& [t, boxes] : annotation.frames) {
        const fs::path file = *entry.frames_dir / frame_file(t);
        if (!fs::is_regular_file(file)) throw IoError("missing frame image " + file.string());
        Image img = read_png(file);
        if (img.height != volume.pixel_H || img.width != volume.pixel_W)
          throw Error(file.string() + " does not match the volume resolution");
        images.emplace_back(t, std::move(img));
      }
      const fs::path dir = options.out / entry.clip_id;
      ensure_dir(dir);
      for (const auto& [t, img] : images) {
        write_png(render_overlay(img, volume.frame(t), options.overlay, annotation.boxes(t)), dir / frame_file(t));
        ++written[i];
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<ClipFailure> failures;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += written[i];
    if (!errors[i].empty()) failures.push_back(ClipFailure{manifest.clips[i].clip_id, errors[i]});
  }
  std::sort(failures.begin(), failures.end(),
            [](const ClipFailure& a, const ClipFailure& b) { return a.clip_id < b.clip_id; });
  for (const auto& f : failures) err << "warning: skipped " << f.clip_id << ": " << f.reason << "\n";
  out << "rendered " << total << " overlays into " << options.out.string() << "\n";
  return failures.empty() ? kExitOk : kExitPartial;
}

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  if (options.inputs.empty()) {
    err << "error: report needs at least one --inputs file\n";
    return kExitUsage;
  }
  try {
    std::vector<GroundingReport> reports;
    for (const auto& path : options.inputs) {
      if (!fs::is_regular_file(path)) throw IoError("missing report " + path.string());
      reports.push_back(report_from_json(read_text(path)));
    }
    const std::string tables = render_tables(reports);
    ensure_dir(options.out);
    write_text(options.out / "tables.txt", tables);
    out << tables;
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatiotemporal relevance maps and grounding metrics for factored video transformers", "groundlens"};
  app.require_subcommand(1);

  GenToyOptions gen;
  std::string mode = "pooling";
  auto* gen_cmd = app.add_subcommand("gen-toy", "Generate planted-rectangle fixtures with toy-model traces");
  gen_cmd->add_option("--clips", gen.fixture.clips, "Number of clips")->check(CLI::NonNegativeNumber)->capture_default_str();
  gen_cmd->add_option("--seed", gen.fixture.seed, "Seed for weights and scenes")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--mode", mode, "Frame embedding: pooling or cls")
      ->check(CLI::IsMember({"pooling", "cls"}))
      ->capture_default_str();
  gen_cmd->add_option("--frames", gen.fixture.model.frames, "Frames per clip")->capture_default_str();
  gen_cmd->add_option("--classes", gen.fixture.model.num_classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--blocks", gen.fixture.model.blocks, "Factored blocks")->capture_default_str();
  gen_cmd->add_option("--head-blocks", gen.fixture.model.head_blocks, "Classifier-head temporal blocks")
      ->capture_default_str();
  gen_cmd->add_option("--heads", gen.fixture.model.heads, "Attention heads")->capture_default_str();
  gen_cmd->add_option("--width", gen.fixture.model.width, "Model width")->capture_default_str();
  gen_cmd->add_flag("--zero-temporal-grads", gen.fixture.zero_temporal_grads,
                    "Write zero gradients for temporal and head_temporal records");

  PropagateOptions prop;
  prop.jobs = default_jobs();
  std::string method = "chefer_t";
  auto* prop_cmd = app.add_subcommand("propagate", "Compute relevance volumes for every clip");
  prop_cmd->add_option("--manifest", prop.manifest, "Dataset manifest")->required();
  prop_cmd->add_option("--method", method, "chefer or chefer_t")
      ->check(CLI::IsMember({"chefer", "chefer_t"}))
      ->capture_default_str();
  prop_cmd->add_option("--out", prop.out, "Output directory")->required();
  prop_cmd->add_option("--jobs", prop.jobs, "Worker threads")->check(CLI::PositiveNumber);

  EvaluateOptions eval;
  eval.jobs = default_jobs();
  std::vector<std::string> tier_keys;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score relevance volumes against cue annotations");
  eval_cmd->add_option("--manifest", eval.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--volumes", eval.volumes, "Directory written by propagate")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_option("--tiers", tier_keys, "Tier sets, e.g. P,PS,PSC")->delimiter(',');
  eval_cmd->add_option("--jobs", eval.jobs, "Worker threads")->check(CLI::PositiveNumber);

  RenderOptions render;
  render.jobs = default_jobs();
  bool no_boxes = false;
  auto* render_cmd = app.add_subcommand("render", "Write relevance overlays for annotated frames");
  render_cmd->add_option("--manifest", render.manifest, "Dataset manifest")->required();
  render_cmd->add_option("--volumes", render.volumes, "Directory written by propagate")->required();
  render_cmd->add_option("--out", render.out, "Output directory")->required();
  render_cmd->add_option("--alpha", render.overlay.alpha, "Overlay opacity in [0, 1]")->capture_default_str();
  render_cmd->add_flag("--no-boxes", no_boxes, "Do not draw cue boxes");
  render_cmd->add_option("--jobs", render.jobs, "Worker threads")->check(CLI::PositiveNumber);

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Tabulate one or more report.json files side by side");
  report_cmd->add_option("--inputs", rep.inputs, "report.json files")->required();
  report_cmd->add_option("--out", rep.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << "usage: " << app.help() << "\n";
    return kExitUsage;
  }

  if (*gen_cmd) {
    gen.fixture.model.mode = *parse_extraction_mode(mode);
    if (const char* env = std::getenv("GROUNDLENS_SEED")) {
      try {
        std::size_t used = 0;
        const std::string text = env;
        gen.fixture.seed = std::stoull(text, &used, 0);
        if (used != text.size() || text.empty() || text.front() == '-') throw std::invalid_argument(text);
      } catch (const std::exception&) {
        err << "error: GROUNDLENS_SEED must be an unsigned integer\n";
        return kExitUsage;
      }
    }
    gen.fixture.model.seed = gen.fixture.seed;
    return cmd_gen_toy(gen, out, err);
  }
  if (*prop_cmd) {
    prop.method = *parse_method(method);
    return cmd_propagate(prop, out, err);
  }
  if (*eval_cmd) {
    for (const auto& key : tier_keys) {
      const auto t = parse_tier_set(key);
      if (!t) {
        err << "error: unknown tier set '" << key << "'\n";
        return kExitUsage;
      }
      eval.tiers.push_back(*t);
    }
    return cmd_evaluate(eval, out, err);
  }
  if (*render_cmd) {
    render.overlay.draw_boxes = !no_boxes;
    return cmd_render(render, out, err);
  }
  return cmd_report(rep, out, err);
}

}  // namespace groundlens
