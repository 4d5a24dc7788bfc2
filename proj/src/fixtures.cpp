// SPDX-License-Identifier: Apache-2.0
#include "groundlens/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace groundlens {

namespace {

constexpr double kNoiseLevel = 0.15;
constexpr double kSecondaryLevel = 0.35;
constexpr double kCommonLevel = 0.6;

const std::array<std::array<double, 3>, 6> kClassColors = {{
    {0.95, 0.25, 0.20},
    {0.20, 0.90, 0.30},
    {0.25, 0.40, 0.95},
    {0.95, 0.85, 0.20},
    {0.85, 0.30, 0.90},
    {0.20, 0.90, 0.90},
}};

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", prefix, i);
  return buf;
}

/// Corners first, then the remaining cells row-major, centre cell last.
std::vector<std::pair<int, int>> anchor_cells(int gh, int gw) {
  std::vector<std::pair<int, int>> cells = {{0, 0}, {0, gw - 1}, {gh - 1, 0}, {gh - 1, gw - 1}};
  const std::pair<int, int> centre{gh / 2, gw / 2};
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c)
      if (std::pair{r, c} != centre) cells.emplace_back(r, c);
  cells.push_back(centre);
  std::vector<std::pair<int, int>> unique;
  for (const auto& cell : cells)
    if (std::find(unique.begin(), unique.end(), cell) == unique.end()) unique.push_back(cell);
  return unique;
}

struct PixelBox {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;
};

CueBox normalized(Tier tier, const PixelBox& b, int height, int width) {
  return CueBox{tier, static_cast<double>(b.col0) / width, static_cast<double>(b.row0) / height,
                static_cast<double>(b.cols) / width, static_cast<double>(b.rows) / height};
}

void fill(Image& img, const PixelBox& b, const std::array<double, 3>& color) {
  for (int i = b.row0; i < b.row0 + b.rows; ++i)
    for (int j = b.col0; j < b.col0 + b.cols; ++j)
      for (int ch = 0; ch < 3; ++ch) img.pixel(i, j)[ch] = quantize(color[ch]);
}

std::vector<std::string> fixture_classes(int count) {
  const auto& defaults = default_event_classes();
  std::vector<std::string> out;
  for (int c = 0; c < count; ++c)
    out.push_back(c < static_cast<int>(defaults.size()) ? defaults[c] : "class " + std::to_string(c));
  return out;
}

}  // namespace

ClipTokens patchify(const std::vector<Image>& frames, const ToyModelConfig& config) {
  const int P = config.patch_size;
  ClipTokens tokens;
  tokens.reserve(frames.size());
  for (const Image& img : frames) {
    if (img.height != config.pixel_h() || img.width != config.pixel_w())
      throw Error("patchify: frame is not " + std::to_string(config.pixel_h()) + "x" + std::to_string(config.pixel_w()));
    Matrix m(config.patches(), config.input_dim());
    for (int r = 0; r < config.grid_h; ++r)
      for (int c = 0; c < config.grid_w; ++c) {
        const int p = r * config.grid_w + c;
        for (int ch = 0; ch < 3; ++ch)
          for (int dy = 0; dy < P; ++dy)
            for (int dx = 0; dx < P; ++dx)
              m(p, ch * P * P + dy * P + dx) = img.pixel(r * P + dy, c * P + dx)[ch] / 255.0;
      }
    tokens.push_back(std::move(m));
  }
  return tokens;
}

void write_tokens(const ClipTokens& tokens, const fs::path& file) {
  std::vector<double> flat;
  for (const Matrix& m : tokens) flat.insert(flat.end(), m.data(), m.data() + m.size());
  write_f64(file, flat);
}

ClipTokens read_tokens(const fs::path& file, const ToyModelConfig& config) {
  const std::size_t per_frame = static_cast<std::size_t>(config.patches()) * config.input_dim();
  const std::vector<double> flat = read_f64(file, per_frame * config.frames);
  ClipTokens tokens;
  for (int t = 0; t < config.frames; ++t)
    tokens.push_back(Eigen::Map<const Matrix>(flat.data() + t * per_frame, config.patches(), config.input_dim()));
  return tokens;
}

SyntheticClip synthesize_clip(const ToyModelConfig& config, const std::vector<std::string>& classes, int index,
                              SplitMix64& rng) {
  const int T = config.frames;
  const int P = config.patch_size;
  const int H = config.pixel_h();
  const int W = config.pixel_w();

  SyntheticClip clip;
  clip.clip_id = numbered("clip", index);
  clip.event_class = index % static_cast<int>(classes.size());
  clip.annotation.clip_id = clip.clip_id;
  clip.annotation.event_class = classes[clip.event_class];

  // Primary: inside the class's anchor cell.
  const auto anchors = anchor_cells(config.grid_h, config.grid_w);
  const auto [cell_r, cell_c] = anchors[clip.event_class % anchors.size()];
  const int lo = std::max(1, (P + 1) / 4);
  const int hi = std::max(lo, P - 3);
  PixelBox primary;
  primary.rows = std::min(P, rng.range(lo, hi));
  primary.cols = std::min(P, rng.range(lo, hi));
  primary.row0 = cell_r * P + rng.range(0, P - primary.rows);
  primary.col0 = cell_c * P + rng.range(0, P - primary.cols);

  // Secondary: the primary grown by 2-3 px, clipped to the image.
  const int grow = rng.range(2, 3);
  PixelBox secondary;
  secondary.row0 = std::max(0, primary.row0 - grow);
  secondary.col0 = std::max(0, primary.col0 - grow);
  secondary.rows = std::min(H, primary.row0 + primary.rows + grow) - secondary.row0;
  secondary.cols = std::min(W, primary.col0 + primary.cols + grow) - secondary.col0;

  // Common: a bar across the centre cell.
  PixelBox common;
  common.rows = std::max(1, std::min(2, P));
  common.cols = std::max(1, P - 2);
  common.row0 = (config.grid_h / 2) * P + std::max(0, P / 2 - 1);
  common.col0 = (config.grid_w / 2) * P + (P - common.cols) / 2;

  const int length = rng.range(std::max(1, T / 2), T);
  const int start = rng.range(0, T - length);
  const int common_end = std::min(T - 1, start + length);

  const auto& color = kClassColors[clip.event_class % kClassColors.size()];
  for (int t = 0; t < T; ++t) {
    Image img(H, W);
    for (auto& v : img.rgb) v = quantize(rng.uniform() * kNoiseLevel);
    const bool event = t >= start && t < start + length;
    const bool lingering = t >= start && t <= common_end;
    std::vector<CueBox> boxes;
    if (lingering) fill(img, common, {kCommonLevel, kCommonLevel, kCommonLevel});
    if (event) {
      fill(img, secondary, {kSecondaryLevel, kSecondaryLevel, kSecondaryLevel});
      fill(img, primary, color);
      boxes.push_back(normalized(Tier::primary, primary, H, W));
      boxes.push_back(normalized(Tier::secondary, secondary, H, W));
    }
    if (lingering) boxes.push_back(normalized(Tier::common, common, H, W));
    if (!boxes.empty()) clip.annotation.frames.emplace(t, std::move(boxes));
    clip.frames.push_back(std::move(img));
  }
  clip.tokens = patchify(clip.frames, config);
  return clip;
}

FixtureResult generate_fixtures(const FixtureOptions& options, const fs::path& out_dir) {
  const ToyModelConfig& config = options.model;
  config.validate();
  if (options.clips < 0) throw Error("fixture clip count must be >= 0");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  FixtureResult result;
  result.manifest_path = out_dir / "manifest.json";
  DatasetManifest& manifest = result.manifest;
  manifest.classes = fixture_classes(config.num_classes);
  manifest.frames = config.frames;
  manifest.pixel_H = config.pixel_h();
  manifest.pixel_W = config.pixel_w();

  if (options.clips > 0) {
    ToyModelConfig seeded = config;
    seeded.seed = options.seed;
    const ToyModelWeights weights = init_weights(seeded, options.seed);
    save_weights(weights, out_dir / "weights");

    SplitMix64 rng(options.seed + kSceneSeedOffset);
    for (int i = 0; i < options.clips; ++i) {
      SyntheticClip clip = synthesize_clip(config, manifest.classes, i, rng);
      const fs::path dir = out_dir / "clips" / clip.clip_id;
      fs::create_directories(dir / "frames", ec);
      if (ec) throw IoError("cannot create " + (dir / "frames").string() + ": " + ec.message());

      write_text(dir / "annotation.json", annotations_to_json(clip.annotation));
      for (int t = 0; t < config.frames; ++t) write_png(clip.frames[t], dir / "frames" / (numbered("frame", t) + ".png"));
      write_tokens(clip.tokens, dir / "tokens.f64");

      AttentionTrace trace = emit_trace(weights, clip.tokens, clip.event_class, clip.clip_id);
      if (options.zero_temporal_grads)
        for (AttentionRecord& r : trace.records)
          if (r.kind == RecordKind::temporal || r.kind == RecordKind::head_temporal)
            std::fill(r.grad.begin(), r.grad.end(), 0.0f);
      write_trace(trace, dir / "trace");

      manifest.clips.push_back(ClipEntry{clip.clip_id, dir / "annotation.json", dir / "trace", dir / "frames"});
      result.box_counts.push_back(clip.annotation.box_count());
    }
  }
  write_dataset_manifest(manifest, result.manifest_path);
  return result;
}

}  // namespace groundlens
