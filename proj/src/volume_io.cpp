// SPDX-License-Identifier: Apache-2.0
#include "groundlens/volume_io.hpp"

#include <algorithm>

#include "json.hpp"

namespace groundlens {

using nlohmann::json;

namespace {

constexpr const char* kManifestName = "relevance_manifest.json";

template <typename T>
void sort_by_clip(std::vector<T>& items) {
  std::sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.clip_id < b.clip_id; });
}

}  // namespace

void write_volumes(const VolumeSet& input, const fs::path& dir) {
  VolumeSet set = input;
  sort_by_clip(set.volumes);
  sort_by_clip(set.failures);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json volumes = json::array();
  for (const RelevanceVolume& v : set.volumes) {
    if (!is_plain_file_name(v.clip_id)) throw Error("clip_id '" + v.clip_id + "' is not usable as a file name");
    const std::string file = v.clip_id + ".f32";
    std::vector<float> data(v.maps.begin(), v.maps.end());
    write_f32(dir / file, data);
    volumes.push_back(json{{"clip_id", v.clip_id},
                           {"target_class", v.target_class},
                           {"file", file},
                           {"shape", {v.frames, v.pixel_H, v.pixel_W}},
                           {"grid", {v.grid_h, v.grid_w}},
                           {"temporal_weights", v.temporal_weights}});
  }
  json failures = json::array();
  for (const ClipFailure& f : set.failures) failures.push_back(json{{"clip_id", f.clip_id}, {"reason", f.reason}});

  const json manifest{{"format_version", kVolumeFormatVersion},
                      {"method", std::string(to_string(set.method))},
                      {"volumes", volumes},
                      {"failures", failures}};
  write_text(dir / kManifestName, manifest.dump(2) + "\n");
}

VolumeSet read_volumes(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) throw IoError("missing " + manifest_path.string());
  VolumeSet set;
  try {
    const json j = json::parse(read_text(manifest_path));
    if (j.at("format_version").get<std::string>() != kVolumeFormatVersion)
      throw Error(manifest_path.string() + ": unsupported format_version");
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method) throw Error(manifest_path.string() + ": unknown method");
    set.method = *method;
    for (const json& e : j.at("volumes")) {
      RelevanceVolume v;
      v.method = set.method;
      v.clip_id = e.at("clip_id").get<std::string>();
      v.target_class = e.at("target_class").get<int>();
      const auto shape = e.at("shape").get<std::vector<int>>();
      const auto grid = e.at("grid").get<std::vector<int>>();
      if (shape.size() != 3 || grid.size() != 2) throw Error(manifest_path.string() + ": bad shape for " + v.clip_id);
      for (int s : shape)
        if (s < 1 || s > (1 << 15)) throw Error(manifest_path.string() + ": bad shape for " + v.clip_id);
      v.frames = shape[0];
      v.pixel_H = shape[1];
      v.pixel_W = shape[2];
      v.grid_h = grid[0];
      v.grid_w = grid[1];
      v.temporal_weights = e.at("temporal_weights").get<std::vector<double>>();
      const std::string file = e.at("file").get<std::string>();
      if (!is_plain_file_name(file)) throw Error(manifest_path.string() + ": bad file name '" + file + "'");
      const std::vector<float> data = read_f32(dir / file, element_count({static_cast<std::size_t>(v.frames),
                                                                          static_cast<std::size_t>(v.pixel_H),
                                                                          static_cast<std::size_t>(v.pixel_W)}));
      v.maps.assign(data.begin(), data.end());
      set.volumes.push_back(std::move(v));
    }
    for (const json& f : j.at("failures"))
      set.failures.push_back(ClipFailure{f.at("clip_id").get<std::string>(), f.at("reason").get<std::string>()});
  } catch (const json::exception& e) {
    throw Error(manifest_path.string() + ": malformed: " + e.what());
  }
  sort_by_clip(set.volumes);
  sort_by_clip(set.failures);
  return set;
}

}  // namespace groundlens
