// SPDX-License-Identifier: Apache-2.0
//
// Relevance-volume container: `relevance_manifest.json` plus one raw
// little-endian float32 file per clip holding the [T, pixel_H, pixel_W] maps.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "groundlens/relevance.hpp"

namespace groundlens {

inline constexpr std::string_view kVolumeFormatVersion = "1.0";

struct ClipFailure {
  std::string clip_id;
  std::string reason;
};

struct VolumeSet {
  Method method = Method::chefer_t;
  std::vector<RelevanceVolume> volumes;  // sorted by clip_id
  std::vector<ClipFailure> failures;     // sorted by clip_id
};

/// Volumes are written sorted by clip_id whatever their input order; maps
/// are stored as float32, grids are not stored.
void write_volumes(const VolumeSet& set, const fs::path& dir);

/// Reads every volume listed in the manifest. Maps come back as the float32
/// values widened to float64; `grids` is left empty.
VolumeSet read_volumes(const fs::path& dir);

}  // namespace groundlens
