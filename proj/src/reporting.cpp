// SPDX-License-Identifier: Apache-2.0
#include "groundlens/reporting.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "json.hpp"

namespace groundlens {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// PNG

void write_png(const Image& image, const fs::path& file) {
  if (image.height <= 0 || image.width <= 0 ||
      image.rgb.size() != static_cast<std::size_t>(image.height) * image.width * 3)
    throw Error("write_png: malformed image");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, file.string().c_str(), 0, image.rgb.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError("cannot write " + file.string() + ": " + message);
  }
}

Image read_png(const fs::path& file) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, file.string().c_str()))
    throw IoError("cannot read " + file.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  if (png.width > (1u << 15) || png.height > (1u << 15)) {
    png_image_free(&png);
    throw IoError(file.string() + ": image too large");
  }
  Image out(static_cast<int>(png.height), static_cast<int>(png.width));
  if (!png_image_finish_read(&png, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError("cannot decode " + file.string() + ": " + message);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Overlay

namespace {

void outline(Image& img, const CueBox& box, const Rgb& color) {
  const PixelRect r = pixel_rect(box, img.height, img.width);
  if (r.empty()) return;
  auto put = [&](int i, int j) { std::copy(color.begin(), color.end(), img.pixel(i, j)); };
  for (int j = r.col0; j <= r.col1; ++j) {
    put(r.row0, j);
    put(r.row1, j);
  }
  for (int i = r.row0; i <= r.row1; ++i) {
    put(i, r.col0);
    put(i, r.col1);
  }
}

}  // namespace

Image render_overlay(const Image& frame, std::span<const double> relevance, const OverlaySpec& spec,
                     const std::vector<CueBox>& boxes) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw Error("overlay alpha must lie in [0, 1]");
  if (relevance.size() != static_cast<std::size_t>(frame.height) * frame.width)
    throw Error("overlay: relevance is not " + std::to_string(frame.height) + "x" + std::to_string(frame.width));

  Image out(frame.height, frame.width);
  const double a = spec.alpha;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    const Rgb c = colormap(relevance[k]);
    for (int ch = 0; ch < 3; ++ch) {
      const double v = (1.0 - a) * frame.rgb[k * 3 + ch] + a * c[ch];
      out.rgb[k * 3 + ch] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  }
  if (spec.draw_boxes) {
    for (const auto& [tier, color] : {std::pair{Tier::common, kCommonColor}, std::pair{Tier::secondary, kSecondaryColor},
                                      std::pair{Tier::primary, kPrimaryColor}})
      for (const CueBox& b : boxes)
        if (b.tier == tier) outline(out, b, color);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report JSON

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

namespace {

ojson summary_json(const MetricSummary& m) {
  return ojson{{"energy", m.energy}, {"pointing", m.pointing}, {"s_iou", m.s_iou},
               {"t_iou", m.t_iou},   {"frames", m.frames},     {"clips", m.clips}};
}

MetricSummary summary_from(const ojson& j) {
  MetricSummary m;
  m.energy = j.at("energy").get<double>();
  m.pointing = j.at("pointing").get<double>();
  m.s_iou = j.at("s_iou").get<double>();
  m.t_iou = j.at("t_iou").get<double>();
  m.frames = j.at("frames").get<std::size_t>();
  m.clips = j.at("clips").get<std::size_t>();
  return m;
}

TierSet tiers_from_label(const std::string& label) {
  std::string key;
  for (char c : label)
    if (c != '+') key += c;
  const auto t = parse_tier_set(key);
  if (!t) throw Error("report: unknown tier set '" + label + "'");
  return *t;
}

}  // namespace

std::string report_to_json(const GroundingReport& r) {
  ojson tiers = ojson::array();
  for (TierSet t : r.tiers) tiers.push_back(t.label());

  ojson per_class = ojson::object();
  for (const ClassSummary& c : r.per_class) {
    ojson entry{{"accuracy", c.accuracy}, {"clips", c.clips}};
    for (std::size_t k = 0; k < r.tiers.size(); ++k) entry[r.tiers[k].label()] = summary_json(c.by_tier[k]);
    per_class[c.name] = entry;
  }
  ojson macro = ojson::object(), micro = ojson::object();
  for (std::size_t k = 0; k < r.tiers.size(); ++k) {
    macro[r.tiers[k].label()] = summary_json(r.macro[k]);
    micro[r.tiers[k].label()] = summary_json(r.micro[k]);
  }
  const ojson j{{"method", r.method}, {"tiers", tiers},         {"per_class", per_class}, {"macro", macro},
                {"micro", micro},     {"accuracy", r.accuracy}, {"clips", r.clips}};
  return j.dump(2) + "\n";
}

GroundingReport report_from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    GroundingReport r;
    r.method = j.at("method").get<std::string>();
    std::vector<std::string> labels;
    for (const auto& t : j.at("tiers")) {
      labels.push_back(t.get<std::string>());
      r.tiers.push_back(tiers_from_label(labels.back()));
    }
    for (const auto& [name, c] : j.at("per_class").items()) {
      ClassSummary s;
      s.name = name;
      s.accuracy = c.at("accuracy").get<double>();
      s.clips = c.at("clips").get<std::size_t>();
      for (const auto& l : labels) s.by_tier.push_back(summary_from(c.at(l)));
      r.per_class.push_back(std::move(s));
    }
    for (const auto& l : labels) {
      r.macro.push_back(summary_from(j.at("macro").at(l)));
      r.micro.push_back(summary_from(j.at("micro").at(l)));
    }
    r.accuracy = j.at("accuracy").get<double>();
    r.clips = j.at("clips").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Text tables

namespace {

constexpr int kLabelWidth = 22;
constexpr int kCellWidth = 8;

std::string pad_right(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? " " + s : std::string(width - s.size(), ' ') + s;
}

std::string rstrip(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

/// Header: method names spanning their tier columns, then tier labels.
void header(std::ostringstream& out, const std::string& first, std::span<const GroundingReport> reports) {
  const std::size_t n = reports.front().tiers.size();
  std::string line = pad_right("", kLabelWidth);
  for (const auto& r : reports) line += pad_right(" " + r.method, static_cast<int>(n) * kCellWidth + 2);
  out << rstrip(line) << "\n";
  line = pad_right(first, kLabelWidth);
  for (std::size_t g = 0; g < reports.size(); ++g) {
    for (TierSet t : reports.front().tiers) line += pad_left(t.label(), kCellWidth);
    line += "  ";
  }
  out << rstrip(line) << "\n";
  out << std::string(kLabelWidth + reports.size() * (n * kCellWidth + 2), '-') << "\n";
}

void grounding_table(std::ostringstream& out, std::span<const GroundingReport> reports, bool macro) {
  out << (macro ? "Grounding (%), macro mean over classes\n" : "Grounding (%), micro mean over frames and clips\n");
  header(out, "Metric (%)", reports);
  struct Row {
    const char* name;
    double MetricSummary::*field;
  };
  const Row rows[] = {{"Energy", &MetricSummary::energy},
                      {"Pointing", &MetricSummary::pointing},
                      {"S-IoU", &MetricSummary::s_iou},
                      {"T-IoU", &MetricSummary::t_iou}};
  for (const Row& row : rows) {
    std::string line = pad_right(row.name, kLabelWidth);
    for (const auto& r : reports) {
      for (const MetricSummary& m : macro ? r.macro : r.micro) line += pad_left(format_percent(m.*row.field), kCellWidth);
      line += "  ";
    }
    out << rstrip(line) << "\n";
  }
  std::string line = pad_right("Acc. (%)", kLabelWidth);
  const std::size_t n = reports.front().tiers.size();
  for (const auto& r : reports) line += pad_right(pad_left(format_percent(r.accuracy), kCellWidth), n * kCellWidth + 2);
  out << rstrip(line) << "\n\n";
}

void comparison_table(std::ostringstream& out, std::span<const GroundingReport> reports) {
  out << "T-IoU (%), method comparison\n";
  header(out, "Class", reports);
  std::vector<std::string> classes;
  for (const auto& r : reports)
    for (const auto& c : r.per_class)
      if (std::find(classes.begin(), classes.end(), c.name) == classes.end()) classes.push_back(c.name);

  for (const std::string& name : classes) {
    std::string line = pad_right(name, kLabelWidth);
    for (const auto& r : reports) {
      const auto it = std::find_if(r.per_class.begin(), r.per_class.end(),
                                   [&](const ClassSummary& c) { return c.name == name; });
      for (std::size_t k = 0; k < r.tiers.size(); ++k)
        line += pad_left(it == r.per_class.end() ? "-" : format_percent(it->by_tier[k].t_iou), kCellWidth);
      line += "  ";
    }
    out << rstrip(line) << "\n";
  }
  for (bool macro : {true, false}) {
    std::string line = pad_right(macro ? "macro" : "micro", kLabelWidth);
    for (const auto& r : reports) {
      for (const MetricSummary& m : macro ? r.macro : r.micro) line += pad_left(format_percent(m.t_iou), kCellWidth);
      line += "  ";
    }
    out << rstrip(line) << "\n";
  }
  out << "\n";
}

}  // namespace

std::string render_tables(std::span<const GroundingReport> reports) {
  if (reports.empty()) throw Error("render_tables: no reports");
  for (const auto& r : reports) {
    if (r.tiers != reports.front().tiers) throw Error("render_tables: reports use different tier sets");
    if (r.macro.size() != r.tiers.size() || r.micro.size() != r.tiers.size())
      throw Error("render_tables: report '" + r.method + "' is incomplete");
  }
  std::ostringstream out;
  out << "Tiers: P = primary, S = secondary, C = common cues\n\n";
  grounding_table(out, reports, true);
  grounding_table(out, reports, false);
  if (reports.size() >= 2) comparison_table(out, reports);
  return out.str();
}

}  // namespace groundlens
