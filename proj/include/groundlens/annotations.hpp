// SPDX-License-Identifier: Apache-2.0
//
// Tiered cue annotations (primary / secondary / common boxes per frame) and
// their rasterization into per-frame binary masks.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundlens/error.hpp"

namespace groundlens {

namespace fs = std::filesystem;

enum class Tier : std::uint8_t { primary = 0, secondary = 1, common = 2 };

std::string_view tier_code(Tier tier);  // "P", "S", "C"
std::optional<Tier> parse_tier(std::string_view code);

/// A set of cue tiers, one bit per Tier.
class TierSet {
 public:
  constexpr TierSet() = default;
  constexpr TierSet(std::initializer_list<Tier> tiers) {
    for (Tier t : tiers) bits_ |= bit(t);
  }

  constexpr bool contains(Tier t) const { return (bits_ & bit(t)) != 0; }
  constexpr bool includes(TierSet other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr TierSet with(Tier t) const {
    TierSet out = *this;
    out.bits_ |= bit(t);
    return out;
  }

  /// "P", "PS", "PSC", ... (CLI spelling).
  std::string key() const;
  /// "P", "P+S", "P+S+C", ... (table header spelling).
  std::string label() const;

  constexpr bool operator==(const TierSet&) const = default;

 private:
  static constexpr std::uint8_t bit(Tier t) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t)); }
  std::uint8_t bits_ = 0;
};

/// The three evaluation columns, in order: {P}, {P,S}, {P,S,C}.
std::array<TierSet, 3> tier_sets();

/// Parses a tier-set key such as "PS"; letters may appear in any order.
std::optional<TierSet> parse_tier_set(std::string_view key);

/// Normalized box, top-left origin, x rightward, y downward.
struct CueBox {
  Tier tier = Tier::primary;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const CueBox&) const = default;
};

struct ClipAnnotation {
  std::string clip_id;
  std::string event_class;
  std::map<int, std::vector<CueBox>> frames;  // frame index -> boxes

  /// Boxes of frame t (empty when the frame carries no cues).
  const std::vector<CueBox>& boxes(int t) const;
  bool has_cues(int t, TierSet tiers) const;
  std::size_t box_count() const;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

/// The 13 default event classes.
const std::vector<std::string>& default_event_classes();

/// Parses annotation JSON text:
///   {clip_id, event_class, frames:[{t, boxes:[{tier:"P"|"S"|"C", x, y, w, h}]}]}
/// Validates boxes, frame indices (< frames) and class membership.
ClipAnnotation parse_annotations(const std::string& json_text, const std::vector<std::string>& vocabulary,
                                 int frames);
ClipAnnotation load_annotations(const fs::path& path, const std::vector<std::string>& vocabulary, int frames);
std::string annotations_to_json(const ClipAnnotation& annotation);

/// Per-pixel binary mask, row-major.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  bool at(int i, int j) const { return bits[static_cast<std::size_t>(i) * width + j] != 0; }
  std::size_t popcount() const;
};

/// Pixel (i, j) is set iff its centre ((j+0.5)/W, (i+0.5)/H) lies in some box
/// whose tier is in `tiers`, using half-open containment x <= cx < x+w.
Mask rasterize(const std::vector<CueBox>& boxes, TierSet tiers, int height, int width);

/// Inclusive pixel rows/cols whose centres fall inside the box; empty when
/// first > last.
struct PixelRect {
  int row0, row1, col0, col1;
  bool empty() const { return row0 > row1 || col0 > col1; }
};
PixelRect pixel_rect(const CueBox& box, int height, int width);

struct ClipEntry {
  std::string clip_id;
  fs::path annotation;  // resolved against the manifest directory
  fs::path trace;
  std::optional<fs::path> frames_dir;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  int frames = 30;
  int pixel_H = 224;
  int pixel_W = 224;
  std::vector<ClipEntry> clips;

  int class_index(std::string_view name) const;  // -1 when absent
};

/// Parses {classes:[...], defaults:{T, pixel_H, pixel_W}, clips:[{clip_id,
/// annotation, trace, frames_dir?}]}; relative paths resolve against the
/// manifest's directory. An absent "classes" key selects the default list.
DatasetManifest load_dataset_manifest(const fs::path& path);

/// Writes paths relative to `manifest_path`'s directory.
void write_dataset_manifest(const DatasetManifest& manifest, const fs::path& manifest_path);

}  // namespace groundlens
