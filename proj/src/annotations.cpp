// SPDX-License-Identifier: Apache-2.0
#include "groundlens/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "groundlens/tensor_file.hpp"
#include "json.hpp"

namespace groundlens {

using nlohmann::json;

namespace {

// Slack on the x+w <= 1 bound so boxes built from pixel fractions such as
// 14/21 + 7/21 are not rejected over one ulp.
constexpr double kBoundSlack = 1e-9;

double center(int index, int extent) { return (index + 0.5) / extent; }

void check_box(const CueBox& b, const std::string& where) {
  const bool finite = std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h);
  if (!finite || b.x < 0.0 || b.y < 0.0 || b.w <= 0.0 || b.h <= 0.0 || b.x + b.w > 1.0 + kBoundSlack ||
      b.y + b.h > 1.0 + kBoundSlack)
    throw AnnotationError(where + ": box out of range (x=" + std::to_string(b.x) + ", y=" + std::to_string(b.y) +
                          ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) + ")");
}

double number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number())
    throw AnnotationError(where + ": '" + key + "' must be a number");
  return obj[key].get<double>();
}

std::string text(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string())
    throw AnnotationError(where + ": '" + key + "' must be a string");
  return obj[key].get<std::string>();
}

int positive(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number_unsigned() || obj[key].get<std::uint64_t>() < 1 ||
      obj[key].get<std::uint64_t>() > (1u << 20))
    throw AnnotationError(where + ": '" + key + "' must be a positive integer");
  return static_cast<int>(obj[key].get<std::uint64_t>());
}

}  // namespace

std::string_view tier_code(Tier tier) {
  switch (tier) {
    case Tier::primary:
      return "P";
    case Tier::secondary:
      return "S";
    case Tier::common:
      return "C";
  }
  return "?";
}

std::optional<Tier> parse_tier(std::string_view code) {
  if (code == "P") return Tier::primary;
  if (code == "S") return Tier::secondary;
  if (code == "C") return Tier::common;
  return std::nullopt;
}

std::string TierSet::key() const {
  std::string s;
  for (Tier t : {Tier::primary, Tier::secondary, Tier::common})
    if (contains(t)) s += tier_code(t);
  return s;
}

std::string TierSet::label() const {
  std::string s;
  for (Tier t : {Tier::primary, Tier::secondary, Tier::common})
    if (contains(t)) s += (s.empty() ? "" : "+") + std::string(tier_code(t));
  return s;
}

std::array<TierSet, 3> tier_sets() {
  return {TierSet{Tier::primary}, TierSet{Tier::primary, Tier::secondary},
          TierSet{Tier::primary, Tier::secondary, Tier::common}};
}

std::optional<TierSet> parse_tier_set(std::string_view key) {
  if (key.empty()) return std::nullopt;
  TierSet set;
  for (char c : key) {
    const auto tier = parse_tier(std::string_view(&c, 1));
    if (!tier || set.contains(*tier)) return std::nullopt;
    set = set.with(*tier);
  }
  return set;
}

const std::vector<CueBox>& ClipAnnotation::boxes(int t) const {
  static const std::vector<CueBox> none;
  const auto it = frames.find(t);
  return it == frames.end() ? none : it->second;
}

bool ClipAnnotation::has_cues(int t, TierSet tiers) const {
  const auto& b = boxes(t);
  return std::any_of(b.begin(), b.end(), [&](const CueBox& box) { return tiers.contains(box.tier); });
}

std::size_t ClipAnnotation::box_count() const {
  std::size_t n = 0;
  for (const auto& [t, b] : frames) n += b.size();
  return n;
}

const std::vector<std::string>& default_event_classes() {
  static const std::vector<std::string> classes = {
      "corner",  "goal",         "yellow card", "red card", "foul (no card)", "lead to corner", "free kick",
      "substitution", "injury", "foul leading to penalty", "throw-in", "penalty", "second yellow card"};
  return classes;
}

ClipAnnotation parse_annotations(const std::string& json_text, const std::vector<std::string>& vocabulary,
                                 int frames) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw AnnotationError(std::string("malformed annotation JSON: ") + e.what());
  }
  if (!j.is_object()) throw AnnotationError("annotation is not a JSON object");

  ClipAnnotation a;
  a.clip_id = text(j, "clip_id", "annotation");
  const std::string where = "annotation '" + a.clip_id + "'";
  a.event_class = text(j, "event_class", where);
  if (std::find(vocabulary.begin(), vocabulary.end(), a.event_class) == vocabulary.end())
    throw AnnotationError(where + ": unknown class '" + a.event_class + "'");
  if (!j.contains("frames") || !j["frames"].is_array()) throw AnnotationError(where + ": 'frames' must be an array");

  for (const json& fj : j["frames"]) {
    if (!fj.is_object() || !fj.contains("t") || !fj["t"].is_number_integer())
      throw AnnotationError(where + ": frame entry needs an integer 't'");
    const auto t64 = fj["t"].get<std::int64_t>();
    if (t64 < 0 || t64 >= frames)
      throw AnnotationError(where + ": frame index " + std::to_string(t64) + " outside [0, " + std::to_string(frames) +
                            ")");
    const int t = static_cast<int>(t64);
    if (a.frames.count(t)) throw AnnotationError(where + ": frame " + std::to_string(t) + " listed twice");
    if (!fj.contains("boxes") || !fj["boxes"].is_array())
      throw AnnotationError(where + ": frame " + std::to_string(t) + " needs a 'boxes' array");

    std::vector<CueBox> boxes;
    const std::string fwhere = where + " frame " + std::to_string(t);
    for (const json& bj : fj["boxes"]) {
      if (!bj.is_object()) throw AnnotationError(fwhere + ": box is not an object");
      const auto tier = parse_tier(text(bj, "tier", fwhere));
      if (!tier) throw AnnotationError(fwhere + ": unknown tier '" + bj["tier"].get<std::string>() + "'");
      CueBox b{*tier, number(bj, "x", fwhere), number(bj, "y", fwhere), number(bj, "w", fwhere),
               number(bj, "h", fwhere)};
      check_box(b, fwhere);
      boxes.push_back(b);
    }
    if (!boxes.empty()) a.frames.emplace(t, std::move(boxes));
  }
  if (a.frames.empty()) throw AnnotationError(where + ": no annotated frames");
  return a;
}

ClipAnnotation load_annotations(const fs::path& path, const std::vector<std::string>& vocabulary, int frames) {
  return parse_annotations(read_text(path), vocabulary, frames);
}

std::string annotations_to_json(const ClipAnnotation& a) {
  json frames = json::array();
  for (const auto& [t, boxes] : a.frames) {
    json bj = json::array();
    for (const auto& b : boxes)
      bj.push_back(json{{"tier", std::string(tier_code(b.tier))}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    frames.push_back(json{{"t", t}, {"boxes", bj}});
  }
  return json{{"clip_id", a.clip_id}, {"event_class", a.event_class}, {"frames", frames}}.dump(2) + "\n";
}

std::size_t Mask::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Mask rasterize(const std::vector<CueBox>& boxes, TierSet tiers, int height, int width) {
  if (height < 1 || width < 1) throw Error("rasterize: non-positive mask size");
  Mask m{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  for (const auto& b : boxes) {
    if (!tiers.contains(b.tier)) continue;
    const PixelRect r = pixel_rect(b, height, width);
    for (int i = r.row0; i <= r.row1; ++i)
      for (int j = r.col0; j <= r.col1; ++j) m.bits[static_cast<std::size_t>(i) * width + j] = 1;
  }
  return m;
}

PixelRect pixel_rect(const CueBox& b, int height, int width) {
  // Containment is separable in x and y, so scan each axis with the same
  // centre test rasterize() defines.
  PixelRect r{height, -1, width, -1};
  for (int i = 0; i < height; ++i) {
    const double cy = center(i, height);
    if (b.y <= cy && cy < b.y + b.h) {
      r.row0 = std::min(r.row0, i);
      r.row1 = std::max(r.row1, i);
    }
  }
  for (int j = 0; j < width; ++j) {
    const double cx = center(j, width);
    if (b.x <= cx && cx < b.x + b.w) {
      r.col0 = std::min(r.col0, j);
      r.col1 = std::max(r.col1, j);
    }
  }
  return r;
}

int DatasetManifest::class_index(std::string_view name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw AnnotationError(std::string("malformed dataset manifest: ") + e.what());
  }
  if (!j.is_object()) throw AnnotationError("dataset manifest is not a JSON object");
  const fs::path base = path.parent_path();

  DatasetManifest m;
  if (j.contains("classes")) {
    if (!j["classes"].is_array()) throw AnnotationError("dataset manifest: 'classes' must be an array");
    for (const json& c : j["classes"]) {
      if (!c.is_string()) throw AnnotationError("dataset manifest: class names must be strings");
      m.classes.push_back(c.get<std::string>());
    }
  } else {
    m.classes = default_event_classes();
  }
  if (m.classes.empty()) throw AnnotationError("dataset manifest: empty class vocabulary");
  if (std::set<std::string>(m.classes.begin(), m.classes.end()).size() != m.classes.size())
    throw AnnotationError("dataset manifest: duplicate class names");

  if (j.contains("defaults")) {
    const json& d = j["defaults"];
    if (!d.is_object()) throw AnnotationError("dataset manifest: 'defaults' must be an object");
    if (d.contains("T")) m.frames = positive(d, "T", "defaults");
    if (d.contains("pixel_H")) m.pixel_H = positive(d, "pixel_H", "defaults");
    if (d.contains("pixel_W")) m.pixel_W = positive(d, "pixel_W", "defaults");
  }

  if (!j.contains("clips") || !j["clips"].is_array()) throw AnnotationError("dataset manifest: 'clips' must be an array");
  std::set<std::string> ids;
  for (const json& cj : j["clips"]) {
    if (!cj.is_object()) throw AnnotationError("dataset manifest: clip entry is not an object");
    ClipEntry e;
    e.clip_id = text(cj, "clip_id", "dataset manifest clip");
    if (!ids.insert(e.clip_id).second) throw AnnotationError("dataset manifest: duplicate clip_id '" + e.clip_id + "'");
    const std::string where = "dataset manifest clip '" + e.clip_id + "'";
    e.annotation = base / text(cj, "annotation", where);
    e.trace = base / text(cj, "trace", where);
    if (cj.contains("frames_dir")) e.frames_dir = base / text(cj, "frames_dir", where);
    m.clips.push_back(std::move(e));
  }
  return m;
}

void write_dataset_manifest(const DatasetManifest& m, const fs::path& manifest_path) {
  const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  json clips = json::array();
  for (const auto& c : m.clips) {
    json cj{{"clip_id", c.clip_id}, {"annotation", rel(c.annotation)}, {"trace", rel(c.trace)}};
    if (c.frames_dir) cj["frames_dir"] = rel(*c.frames_dir);
    clips.push_back(cj);
  }
  const json j{{"classes", m.classes},
               {"defaults", json{{"T", m.frames}, {"pixel_H", m.pixel_H}, {"pixel_W", m.pixel_W}}},
               {"clips", clips}};
  write_text(manifest_path, j.dump(2) + "\n");
}

}  // namespace groundlens
