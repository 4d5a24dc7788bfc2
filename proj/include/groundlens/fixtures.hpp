// SPDX-License-Identifier: Apache-2.0
//
// Synthetic planted-rectangle clips for the toy model.
//
// Each clip belongs to one class. During a contiguous event window every
// frame carries a bright primary rectangle inside the class's anchor cell of
// the patch grid (corners first), a dimmer secondary frame around it, and a
// grey common bar in the centre cell that may linger one frame past the
// window. Everything else is low-intensity noise. Images are quantized to
// 8 bits before the token features are computed from them.
//
// Output layout under the fixture root:
//   manifest.json
//   weights/                         toy weights (omitted for zero clips)
//   clips/clip_XXX/annotation.json
//   clips/clip_XXX/frames/frame_XXX.png
//   clips/clip_XXX/tokens.f64        [T, N, 3·P²] little-endian float64
//   clips/clip_XXX/trace/
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "groundlens/annotations.hpp"
#include "groundlens/reporting.hpp"
#include "groundlens/rng.hpp"
#include "groundlens/toymodel.hpp"

namespace groundlens {

/// Offset between the weight seed and the scene seed.
inline constexpr std::uint64_t kSceneSeedOffset = 0x632BE59BD9B4E019ULL;

struct FixtureOptions {
  ToyModelConfig model;
  int clips = 8;
  std::uint64_t seed = 42;
  /// Zero the gradients of temporal and head_temporal records before writing
  /// traces, so both attribution methods must agree.
  bool zero_temporal_grads = false;
};

struct SyntheticClip {
  std::string clip_id;
  int event_class = 0;
  std::vector<Image> frames;  // T images of pixel_h × pixel_w
  ClipAnnotation annotation;
  ClipTokens tokens;
};

/// Token features: token p = row·grid_w + col, feature c·P² + dy·P + dx,
/// value byte/255.
ClipTokens patchify(const std::vector<Image>& frames, const ToyModelConfig& config);

void write_tokens(const ClipTokens& tokens, const fs::path& file);
ClipTokens read_tokens(const fs::path& file, const ToyModelConfig& config);

/// Draws clip `index` (class index % num_classes) from `rng`.
SyntheticClip synthesize_clip(const ToyModelConfig& config, const std::vector<std::string>& classes, int index,
                              SplitMix64& rng);

struct FixtureResult {
  DatasetManifest manifest;
  fs::path manifest_path;
  std::vector<std::size_t> box_counts;  // boxes emitted per clip
};

/// Deterministic per options: identical options give byte-identical trees.
FixtureResult generate_fixtures(const FixtureOptions& options, const fs::path& out_dir);

}  // namespace groundlens
