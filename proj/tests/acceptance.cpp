// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion, exit 1 on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <string>

#include "groundlens/fixtures.hpp"
#include "groundlens/metrics.hpp"
#include "groundlens/relevance.hpp"
#include "groundlens/trace_io.hpp"
#include "support.hpp"

#ifndef GROUNDLENS_GOLDEN_DIR
#error "GROUNDLENS_GOLDEN_DIR must point at the committed golden artifacts"
#endif

namespace gl = groundlens;
namespace glt = groundlens::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

/// Seed-42 fixtures shared by the fixture-based criteria.
struct FixtureSet {
  glt::TempDir dir{"acceptance"};
  gl::DatasetManifest manifest;
  gl::DatasetManifest zero_grad_manifest;

  FixtureSet() {
    gl::FixtureOptions o;
    manifest = gl::load_dataset_manifest(gl::generate_fixtures(o, dir / "fixtures").manifest_path);
    o.zero_temporal_grads = true;
    zero_grad_manifest = gl::load_dataset_manifest(gl::generate_fixtures(o, dir / "zero").manifest_path);
  }
};

Outcome gradient_oracle() {
  const auto start = Clock::now();
  const gl::ToyModelConfig config;
  const gl::ToyModelWeights weights = gl::init_weights(config, config.seed);
  gl::SplitMix64 rng(7);
  const gl::ClipTokens tokens = glt::random_tokens(config, rng);
  std::size_t checked = 0, failed = 0;
  std::string worst;
  for (int target = 0; target < config.num_classes; ++target) {
    for (const auto& g : {glt::check_attention_gradients(weights, tokens, target),
                          glt::check_input_gradients(weights, tokens, target)}) {
      checked += g.checked;
      failed += g.failed;
      if (g.failed > 0 && worst.empty()) worst = g.worst;
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = failed == 0 && checked > 0 && elapsed < 60.0;
  std::string detail = std::to_string(checked) + " entries, " + std::to_string(failed) + " outside tolerance, " +
                       fmt("%.1f s (limit 60 s)", elapsed);
  if (!worst.empty()) detail += "; worst: " + worst;
  return {pass, detail};
}

double max_abs(const gl::Matrix& a, const glt::Dense& b) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) d = std::max(d, std::fabs(a(i, j) - b[i][j]));
  return d;
}

Outcome propagation_oracle() {
  gl::SplitMix64 rng(2025);
  const int traces = 25;
  double worst = 0.0;
  for (int k = 0; k < traces; ++k) {
    const gl::AttentionTrace t = glt::random_trace(glt::random_spec(rng), rng);
    for (int f = 0; f < t.geometry.frames_T; ++f) worst = std::max(worst, max_abs(gl::propagate_spatial(t, f), glt::oracle_spatial(t, f)));
    const auto temporal = gl::propagate_temporal(t);
    const auto oracle_t = glt::oracle_temporal(t);
    for (std::size_t p = 0; p < temporal.size(); ++p) worst = std::max(worst, max_abs(temporal[p], oracle_t[p]));
    const gl::RelevanceVolume v = gl::attribute(t, gl::Method::chefer_t);
    const std::vector<double> o = glt::oracle_attribute(t, gl::Method::chefer_t);
    if (o.size() != v.maps.size()) return {false, "volume size differs from the oracle"};
    for (std::size_t i = 0; i < o.size(); ++i) worst = std::max(worst, std::fabs(o[i] - v.maps[i]));
  }
  return {worst <= 1e-9, std::to_string(traces) + " random traces, max abs diff " + fmt("%.3g (limit 1e-9)", worst)};
}

Outcome reduction(const FixtureSet& fx) {
  std::size_t clips = 0, differing = 0;
  for (const gl::ClipEntry& e : fx.zero_grad_manifest.clips) {
    const gl::AttentionTrace t = gl::read_trace(e.trace);
    const gl::RelevanceVolume a = gl::attribute(t, gl::Method::chefer);
    const gl::RelevanceVolume b = gl::attribute(t, gl::Method::chefer_t);
    ++clips;
    if (a.maps.size() != b.maps.size() ||
        std::memcmp(a.maps.data(), b.maps.data(), a.maps.size() * sizeof(double)) != 0)
      ++differing;
  }
  return {clips > 0 && differing == 0,
          std::to_string(clips) + " fixture traces, " + std::to_string(differing) + " not bitwise equal"};
}

std::vector<double> random_map(gl::SplitMix64& rng, int n) {
  std::vector<double> v(n);
  const int style = rng.range(0, 4);
  for (auto& x : v) x = style == 0 ? 0.0 : style == 1 ? rng.range(0, 3) / 3.0 : rng.uniform();
  return v;
}

Outcome metric_oracles() {
  gl::SplitMix64 rng(99);
  const int instances = 150;
  int mismatches = 0;
  for (int k = 0; k < instances; ++k) {
    const int h = rng.range(1, 16), w = rng.range(1, 16);
    const auto map = random_map(rng, h * w);
    gl::Mask mask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
    for (auto& b : mask.bits) b = rng.range(0, 2) == 0;
    mismatches += std::fabs(gl::energy(map, mask) - glt::oracle_energy(map, mask.bits, h, w)) > 1e-12;
    mismatches += gl::pointing(map, mask) != glt::oracle_pointing(map, mask.bits, h, w);
    mismatches += std::fabs(gl::s_iou(map, mask) - glt::oracle_s_iou(map, mask.bits, h, w)) > 1e-12;

    gl::RelevanceVolume v;
    v.frames = rng.range(1, 6);
    v.pixel_H = h;
    v.pixel_W = w;
    for (int t = 0; t < v.frames; ++t) {
      const auto f = random_map(rng, h * w);
      v.maps.insert(v.maps.end(), f.begin(), f.end());
    }
    gl::ClipAnnotation a;
    for (int t = 0; t < v.frames; ++t)
      if (rng.range(0, 1)) a.frames[t] = {gl::CueBox{static_cast<gl::Tier>(rng.range(0, 2)), 0.0, 0.0, 0.5, 0.5}};
    for (gl::TierSet s : gl::tier_sets())
      mismatches += std::fabs(gl::t_iou(v, a, s) - glt::oracle_t_iou(v, a, s)) > 1e-12;
  }
  return {mismatches == 0, std::to_string(instances) + " instances per metric, " + std::to_string(mismatches) +
                               " mismatches (limit 1e-12)"};
}

Outcome monotonicity(const FixtureSet& fx) {
  std::size_t frames = 0, violations = 0;
  const auto sets = gl::tier_sets();
  for (const gl::ClipEntry& e : fx.manifest.clips) {
    const gl::RelevanceVolume v = gl::attribute(gl::read_trace(e.trace), gl::Method::chefer_t);
    const gl::ClipAnnotation a = gl::load_annotations(e.annotation, fx.manifest.classes, v.frames);
    for (const auto& [t, boxes] : a.frames) {
      ++frames;
      double last_e = -1.0;
      int last_p = -1;
      for (gl::TierSet s : sets) {
        const gl::Mask m = gl::rasterize(boxes, s, v.pixel_H, v.pixel_W);
        const double en = gl::energy(v.frame(t), m);
        const int pt = gl::pointing(v.frame(t), m);
        violations += en < last_e || pt < last_p;
        last_e = en;
        last_p = pt;
      }
    }
  }
  return {frames > 0 && violations == 0,
          std::to_string(frames) + " annotated fixture frames, " + std::to_string(violations) + " violations"};
}

Outcome end_to_end() {
  const fs::path golden = GROUNDLENS_GOLDEN_DIR;
  if (!fs::is_regular_file(golden / "report.json")) return {false, "no golden artifacts at " + golden.string()};
  const auto start = Clock::now();
  std::string detail;
  bool pass = true;
  for (unsigned jobs : {1u, 3u}) {
    glt::TempDir work("acceptance_e2e");
    const std::string diff = glt::compare_trees(golden, glt::build_golden_artifacts(work.path(), jobs));
    if (!diff.empty()) {
      pass = false;
      detail += "jobs=" + std::to_string(jobs) + ": " + diff + "; ";
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 300.0;
  return {pass, detail + std::to_string(glt::list_files(golden).size()) + " golden files byte-identical at jobs 1 and 3, " +
                    fmt("%.1f s (limit 300 s)", elapsed)};
}

Outcome grounding(const FixtureSet& fx) {
  const glt::SanityResult r = glt::grounding_sanity(fx.dir / "fixtures" / "manifest.json");
  return {r.frames > 0 && r.fraction() >= 0.75,
          std::to_string(r.inside_wins) + "/" + std::to_string(r.frames) + " frames " +
              fmt("(%.1f%%, threshold 75%%)", 100.0 * r.fraction())};
}

bool identical(const gl::AttentionTrace& a, const gl::AttentionTrace& b) {
  if (a.format_version != b.format_version || !(a.geometry == b.geometry) || a.clip_id != b.clip_id ||
      a.target_class != b.target_class || a.logits.size() != b.logits.size() || a.records.size() != b.records.size())
    return false;
  if (std::memcmp(a.logits.data(), b.logits.data(), a.logits.size() * sizeof(double)) != 0) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto &x = a.records[i], &y = b.records[i];
    if (x.record_id != y.record_id || x.kind != y.kind || x.layer_index != y.layer_index ||
        x.attn_shape != y.attn_shape || x.grad_shape != y.grad_shape || x.attn.size() != y.attn.size() ||
        x.grad.size() != y.grad.size())
      return false;
    if (std::memcmp(x.attn.data(), y.attn.data(), x.attn.size() * sizeof(float)) != 0 ||
        std::memcmp(x.grad.data(), y.grad.data(), x.grad.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

Outcome trace_round_trip(const FixtureSet& fx) {
  std::size_t traces = 0, broken = 0;
  glt::TempDir dir("acceptance_rt");
  for (const gl::ClipEntry& e : fx.manifest.clips) {
    const gl::AttentionTrace t = gl::read_trace(e.trace);
    const fs::path copy = dir / e.clip_id;
    gl::write_trace(t, copy);
    ++traces;
    broken += !identical(t, gl::read_trace(copy));
  }

  const fs::path clean = fx.manifest.clips.front().trace;
  const auto files = glt::list_files(clean);
  gl::SplitMix64 rng(2024);
  int rejected = 0, still_valid = 0, unstructured = 0;
  for (int m = 0; m < 100; ++m) {
    const fs::path work = dir / ("fuzz" + std::to_string(m));
    fs::copy(clean, work);
    const std::string name = files[rng.range(0, static_cast<int>(files.size()) - 1)];
    std::string bytes = glt::read_bytes(work / name);
    const std::size_t pos = static_cast<std::size_t>(rng.range(0, static_cast<int>(bytes.size()) - 1));
    bytes[pos] = static_cast<char>(bytes[pos] ^ static_cast<char>(rng.range(1, 255)));
    std::ofstream(work / name, std::ios::binary | std::ios::trunc) << bytes;
    try {
      // Accepted only if the mutation left every invariant intact.
      (gl::validate_trace(gl::read_trace(work)).empty() ? still_valid : unstructured) += 1;
    } catch (const gl::TraceError&) {
      ++rejected;
    } catch (...) {
      ++unstructured;
    }
  }
  const bool pass = traces > 0 && broken == 0 && unstructured == 0 && rejected > 0;
  return {pass, std::to_string(traces) + " fixture traces bit-identical after write/read (" + std::to_string(broken) +
                    " differ); 100 mutations: " + std::to_string(rejected) + " structured rejections, " +
                    std::to_string(still_valid) + " left a valid trace, " + std::to_string(unstructured) +
                    " crashes or unstructured errors"};
}

}  // namespace

int main() {
  std::optional<FixtureSet> fixtures;
  std::string setup_error;
  try {
    fixtures.emplace();
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto needs_fixtures = [&](std::function<Outcome(const FixtureSet&)> f) {
    return [&, f]() -> Outcome {
      if (!fixtures) return {false, "fixture generation failed: " + setup_error};
      return f(*fixtures);
    };
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"propagation oracle", propagation_oracle},
      {"reduction property", needs_fixtures(reduction)},
      {"metric oracles", metric_oracles},
      {"tier monotonicity", needs_fixtures(monotonicity)},
      {"end-to-end determinism", end_to_end},
      {"fixture grounding sanity", needs_fixtures(grounding)},
      {"trace round-trip and fuzzing", needs_fixtures(trace_round_trip)},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-30s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
