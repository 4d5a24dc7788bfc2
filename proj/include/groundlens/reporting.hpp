// SPDX-License-Identifier: Apache-2.0
//
// Relevance overlays (8-bit RGB PNG) and grounding tables (JSON + text).
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "groundlens/annotations.hpp"
#include "groundlens/metrics.hpp"

namespace groundlens {

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major 8-bit RGB image.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // height·width·3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t* pixel(int i, int j) { return rgb.data() + (static_cast<std::size_t>(i) * width + j) * 3; }
  const std::uint8_t* pixel(int i, int j) const {
    return rgb.data() + (static_cast<std::size_t>(i) * width + j) * 3;
  }
  bool operator==(const Image&) const = default;
};

/// 8-bit RGB, non-interlaced, no timestamp or text chunks.
void write_png(const Image& image, const fs::path& file);
/// Accepts 8/16-bit gray, gray+alpha, RGB, RGBA and palette images; converts to RGB.
Image read_png(const fs::path& file);

/// The 256-entry dark-blue to dark-red ramp.
const std::array<Rgb, 256>& colormap_table();
/// Entry round(clamp(value, 0, 1)·255).
Rgb colormap(double value);

inline constexpr Rgb kPrimaryColor{255, 0, 0};
inline constexpr Rgb kSecondaryColor{255, 255, 0};
inline constexpr Rgb kCommonColor{0, 255, 0};

struct OverlaySpec {
  double alpha = 0.5;
  bool draw_boxes = true;
};

/// out = round((1 - α)·image + α·colormap(value)) per channel, then 1-px box
/// outlines (common, secondary, primary drawn in that order so primary stays
/// on top). Throws Error on size mismatch or α outside [0, 1].
Image render_overlay(const Image& frame, std::span<const double> relevance, const OverlaySpec& spec,
                     const std::vector<CueBox>& boxes = {});

/// Percentage with two decimals; ties on the exact binary value round to even.
std::string format_percent(double fraction);

/// Full-precision JSON:
///   {method, tiers, per_class:{<class>:{accuracy, clips, <tier>:{...}}},
///    macro:{<tier>:{energy, pointing, s_iou, t_iou, frames, clips}},
///    micro:{...}, accuracy, clips}
std::string report_to_json(const GroundingReport& report);
GroundingReport report_from_json(const std::string& text);

/// Metric rows (Energy, Pointing, S-IoU, T-IoU, Acc.) × tier-set columns,
/// one column group per report, for the macro and the micro aggregate. With
/// two or more reports a T-IoU method comparison follows, one row per class
/// plus the aggregates. Throws Error when the reports' tier sets differ.
std::string render_tables(std::span<const GroundingReport> reports);

}  // namespace groundlens
