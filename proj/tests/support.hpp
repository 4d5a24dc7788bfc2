// SPDX-License-Identifier: Apache-2.0
//
// Shared test machinery: random traces, independent reference
// implementations, temporary directories, golden artifacts.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "groundlens/annotations.hpp"
#include "groundlens/metrics.hpp"
#include "groundlens/relevance.hpp"
#include "groundlens/rng.hpp"
#include "groundlens/toymodel.hpp"
#include "groundlens/trace_io.hpp"

namespace groundlens::testing {

namespace fs = std::filesystem;

/// A fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_bytes(const fs::path& file);
/// Every regular file under `root`, relative, sorted.
std::vector<std::string> list_files(const fs::path& root);
/// Empty when identical; otherwise a description of the first difference.
std::string compare_trees(const fs::path& a, const fs::path& b);

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t hash = 0xCBF29CE484222325ULL);

// ---------------------------------------------------------------------------
// Random traces

struct RandomTraceSpec {
  ModelGeometry geometry;
  int spatial_layers = 1;
  int temporal_layers = 0;
  int head_layers = 0;
  double grad_scale = 1.0;
};

/// A valid trace: softmax rows from random logits, uniform gradients.
AttentionTrace random_trace(const RandomTraceSpec& spec, SplitMix64& rng);

/// Random geometry with T ≤ 4, N ≤ 9, K ≤ 2, up to 3 layers of each kind.
RandomTraceSpec random_spec(SplitMix64& rng);

// ---------------------------------------------------------------------------
// Reference implementations, written as direct loops over std::vector.

using Dense = std::vector<std::vector<double>>;

Dense oracle_spatial(const AttentionTrace& trace, int frame);
std::vector<Dense> oracle_temporal(const AttentionTrace& trace);
/// The full attribution pipeline written out step by step, with interpolation as a tent-filter
/// sum over grid cells. Returns [T, H, W] maps.
std::vector<double> oracle_attribute(const AttentionTrace& trace, Method method);

double oracle_energy(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w);
int oracle_pointing(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w);
double oracle_s_iou(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w);
double oracle_t_iou(const RelevanceVolume& volume, const ClipAnnotation& annotation, TierSet tiers);

// ---------------------------------------------------------------------------
// Toy model gradient check

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_excess = 0.0;  // largest |a - fd| - allowed
  std::string worst;          // description of the worst entry
};

/// Central differences with ε = 1e-5; an entry passes when
/// |analytic - fd| <= max(1e-4·max(|analytic|, |fd|), 1e-8).
GradientCheck check_attention_gradients(const ToyModelWeights& weights, const ClipTokens& tokens, int target);
GradientCheck check_input_gradients(const ToyModelWeights& weights, const ClipTokens& tokens, int target);

ClipTokens random_tokens(const ToyModelConfig& config, SplitMix64& rng);

// ---------------------------------------------------------------------------
// Golden artifacts

/// Runs gen-toy (seed 42, 8 clips) → propagate → evaluate → render with the
/// given job count under `work`, then gathers the artifacts under
/// `work/golden`: report.json, report.txt, overlays/<clip>/frame_XXX.png,
/// logits.json (clip_000 under seed-42 weights) and weights.fnv1a64.
/// Returns the path of the gathered directory.
fs::path build_golden_artifacts(const fs::path& work, unsigned jobs);

/// Fraction of frames with a primary box whose mean Chefer-T relevance inside
/// the primary mask exceeds the mean outside it.
struct SanityResult {
  std::size_t frames = 0;
  std::size_t inside_wins = 0;
  double fraction() const { return frames ? static_cast<double>(inside_wins) / frames : 0.0; }
};
SanityResult grounding_sanity(const fs::path& fixture_manifest);

}  // namespace groundlens::testing
