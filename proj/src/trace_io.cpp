// SPDX-License-Identifier: Apache-2.0
#include "groundlens/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

namespace groundlens {

using nlohmann::json;

namespace {

constexpr std::int64_t kMaxCount = 1 << 24;

const char* kManifestName = "manifest.json";

std::string describe(const Violation& v) {
  std::string s = v.record_id.empty() ? "trace" : "record '" + v.record_id + "'";
  return s + ": " + v.check + ": " + v.detail;
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

void check_geometry(const ModelGeometry& g, ValidationReport& out) {
  auto positive = [&](int v, const char* name) {
    if (v < 1) out.push_back({"", "geometry", std::string(name) + " must be >= 1, got " + std::to_string(v)});
  };
  positive(g.frames_T, "frames_T");
  positive(g.patch_tokens_N, "patch_tokens_N");
  positive(g.heads_K, "heads_K");
  positive(g.grid_h, "grid_h");
  positive(g.grid_w, "grid_w");
  positive(g.pixel_H, "pixel_H");
  positive(g.pixel_W, "pixel_W");
  positive(g.num_classes, "num_classes");
  if (static_cast<std::int64_t>(g.grid_h) * g.grid_w != g.patch_tokens_N)
    out.push_back({"", "geometry", "grid_h*grid_w != patch_tokens_N"});
  if (g.pixel_H < g.grid_h || g.pixel_W < g.grid_w)
    out.push_back({"", "geometry", "pixel resolution smaller than patch grid"});
}

void check_record(const AttentionRecord& r, const ModelGeometry& g, bool geometry_ok, ValidationReport& out) {
  const std::string& id = r.record_id;
  if (r.grad_shape != r.attn_shape)
    out.push_back({id, "grad_shape", "grad_shape " + shape_string(r.grad_shape) + " != attn_shape " +
                                         shape_string(r.attn_shape)});

  bool shape_ok = true;
  if (geometry_ok) {
    const Shape want = expected_shape(r.kind, g);
    if (r.attn_shape != want) {
      out.push_back({id, "shape", std::string(to_string(r.kind)) + " record has shape " +
                                      shape_string(r.attn_shape) + ", expected " + shape_string(want)});
      shape_ok = false;
    }
  }

  std::size_t attn_count = 0;
  try {
    attn_count = element_count(r.attn_shape);
  } catch (const Error& e) {
    out.push_back({id, "shape", e.what()});
    return;
  }
  if (r.attn.size() != attn_count) {
    out.push_back({id, "attn_size", "attn holds " + std::to_string(r.attn.size()) + " values, shape needs " +
                                        std::to_string(attn_count)});
    shape_ok = false;
  }
  std::size_t grad_count = 0;
  try {
    grad_count = element_count(r.grad_shape);
  } catch (const Error&) {
    grad_count = static_cast<std::size_t>(-1);
  }
  if (r.grad.size() != grad_count)
    out.push_back({id, "grad_size", "grad holds " + std::to_string(r.grad.size()) + " values, grad_shape needs " +
                                        (grad_count == static_cast<std::size_t>(-1) ? std::string("overflow")
                                                                                    : std::to_string(grad_count))});

  for (std::size_t i = 0; i < r.attn.size(); ++i) {
    const float a = r.attn[i];
    if (!std::isfinite(a) || a < 0.0f || a > 1.0f) {
      out.push_back({id, "attn_range", "attn[" + std::to_string(i) + "] = " + format_value(a) + " not in [0,1]"});
      shape_ok = false;
      break;
    }
  }
  for (std::size_t i = 0; i < r.grad.size(); ++i) {
    if (!std::isfinite(r.grad[i])) {
      out.push_back({id, "grad_finite", "grad[" + std::to_string(i) + "] is not finite"});
      break;
    }
  }

  if (!shape_ok || r.attn_shape.empty()) return;
  const std::size_t row = r.attn_shape.back();
  if (row == 0) return;
  for (std::size_t start = 0; start + row <= r.attn.size(); start += row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < row; ++j) sum += r.attn[start + j];
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      out.push_back({id, "row_sum", "row " + std::to_string(start / row) + " sums to " + format_value(sum)});
      break;
    }
  }
}

// Forward order: backbone (spatial/temporal) records, then the pooling
// record, then classifier-head temporal records.
int stage_of(RecordKind kind) {
  switch (kind) {
    case RecordKind::spatial:
    case RecordKind::temporal:
      return 0;
    case RecordKind::pooling:
      return 1;
    case RecordKind::head_temporal:
      return 2;
  }
  return 0;
}

// --- manifest parsing -------------------------------------------------------

[[noreturn]] void malformed(const std::string& what) {
  throw TraceError(TraceErrorCode::malformed_manifest, "", "malformed manifest: " + what);
}

void require_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) malformed(where + " is not an object");
  std::set<std::string> allowed;
  for (const char* k : keys) {
    allowed.insert(k);
    if (!obj.contains(k)) malformed(where + " lacks key '" + k + "'");
  }
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) malformed(where + " has unexpected key '" + item.key() + "'");
}

int get_int(const json& obj, const char* key, std::int64_t lo, std::int64_t hi) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) malformed(std::string("'") + key + "' is not an integer");
  const auto n = v.get<std::int64_t>();
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi))
    malformed(std::string("'") + key + "' out of range");
  if (n < lo || n > hi) malformed(std::string("'") + key + "' out of range");
  return static_cast<int>(n);
}

std::string get_string(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) malformed(std::string("'") + key + "' is not a string");
  return v.get<std::string>();
}

Shape get_shape(const json& v) {
  if (!v.is_array() || v.empty() || v.size() > 8) malformed("'shape' must be a non-empty array");
  Shape shape;
  for (const json& d : v) {
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() > static_cast<std::uint64_t>(kMaxCount))
      malformed("'shape' entries must be non-negative integers");
    shape.push_back(static_cast<std::size_t>(d.get<std::uint64_t>()));
  }
  return shape;
}

json geometry_to_json(const ModelGeometry& g) {
  return json{{"frames_T", g.frames_T},   {"patch_tokens_N", g.patch_tokens_N},
              {"heads_K", g.heads_K},     {"grid_h", g.grid_h},
              {"grid_w", g.grid_w},       {"pixel_H", g.pixel_H},
              {"pixel_W", g.pixel_W},     {"extraction_mode", std::string(to_string(g.extraction_mode))},
              {"num_classes", g.num_classes}};
}

ModelGeometry geometry_from_json(const json& j) {
  require_keys(j,
               {"frames_T", "patch_tokens_N", "heads_K", "grid_h", "grid_w", "pixel_H", "pixel_W",
                "extraction_mode", "num_classes"},
               "geometry");
  ModelGeometry g;
  g.frames_T = get_int(j, "frames_T", 0, kMaxCount);
  g.patch_tokens_N = get_int(j, "patch_tokens_N", 0, kMaxCount);
  g.heads_K = get_int(j, "heads_K", 0, kMaxCount);
  g.grid_h = get_int(j, "grid_h", 0, kMaxCount);
  g.grid_w = get_int(j, "grid_w", 0, kMaxCount);
  g.pixel_H = get_int(j, "pixel_H", 0, kMaxCount);
  g.pixel_W = get_int(j, "pixel_W", 0, kMaxCount);
  g.num_classes = get_int(j, "num_classes", 0, kMaxCount);
  const auto mode = parse_extraction_mode(get_string(j, "extraction_mode"));
  if (!mode) malformed("unknown extraction_mode");
  g.extraction_mode = *mode;
  return g;
}

std::string attn_file_name(const AttentionRecord& r) { return r.record_id + ".attn.f32"; }
std::string grad_file_name(const AttentionRecord& r) { return r.record_id + ".grad.f32"; }

}  // namespace

std::string_view to_string(ExtractionMode mode) { return mode == ExtractionMode::cls ? "cls" : "pooling"; }

std::optional<ExtractionMode> parse_extraction_mode(std::string_view text) {
  if (text == "cls") return ExtractionMode::cls;
  if (text == "pooling") return ExtractionMode::pooling;
  return std::nullopt;
}

std::string_view to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::spatial:
      return "spatial";
    case RecordKind::temporal:
      return "temporal";
    case RecordKind::pooling:
      return "pooling";
    case RecordKind::head_temporal:
      return "head_temporal";
  }
  return "?";
}

std::optional<RecordKind> parse_record_kind(std::string_view text) {
  if (text == "spatial") return RecordKind::spatial;
  if (text == "temporal") return RecordKind::temporal;
  if (text == "pooling") return RecordKind::pooling;
  if (text == "head_temporal") return RecordKind::head_temporal;
  return std::nullopt;
}

std::string_view to_string(TraceErrorCode code) {
  switch (code) {
    case TraceErrorCode::io:
      return "io";
    case TraceErrorCode::missing_manifest:
      return "missing_manifest";
    case TraceErrorCode::malformed_manifest:
      return "malformed_manifest";
    case TraceErrorCode::unsupported_version:
      return "unsupported_version";
    case TraceErrorCode::unknown_kind:
      return "unknown_kind";
    case TraceErrorCode::size_mismatch:
      return "size_mismatch";
    case TraceErrorCode::invariant:
      return "invariant";
  }
  return "?";
}

TraceError::TraceError(TraceErrorCode c, std::string id, const std::string& message)
    : Error(message), code(c), record_id(std::move(id)) {}

Shape expected_shape(RecordKind kind, const ModelGeometry& g) {
  const auto T = static_cast<std::size_t>(g.frames_T);
  const auto N = static_cast<std::size_t>(g.patch_tokens_N);
  const auto K = static_cast<std::size_t>(g.heads_K);
  const auto Np = static_cast<std::size_t>(g.spatial_tokens());
  switch (kind) {
    case RecordKind::spatial:
      return {T, K, Np, Np};
    case RecordKind::temporal:
      return {N, K, T, T};
    case RecordKind::pooling:
      return {T, K, 1, N};
    case RecordKind::head_temporal:
      return {K, T, T};
  }
  return {};
}

std::vector<const AttentionRecord*> AttentionTrace::records_of(RecordKind kind) const {
  std::vector<const AttentionRecord*> out;
  for (const auto& r : records)
    if (r.kind == kind) out.push_back(&r);
  return out;
}

ValidationReport validate_trace(const AttentionTrace& trace) {
  ValidationReport out;
  const ModelGeometry& g = trace.geometry;

  if (trace.format_version != kTraceFormatVersion)
    out.push_back({"", "format_version", "unsupported format_version '" + trace.format_version + "'"});
  check_geometry(g, out);
  const bool geometry_ok = out.empty() || std::none_of(out.begin(), out.end(), [](const Violation& v) {
                             return v.check == "geometry";
                           });

  if (g.num_classes >= 1 && trace.logits.size() != static_cast<std::size_t>(g.num_classes))
    out.push_back({"", "logits", "logits has " + std::to_string(trace.logits.size()) + " entries, num_classes is " +
                                     std::to_string(g.num_classes)});
  for (double v : trace.logits)
    if (!std::isfinite(v)) {
      out.push_back({"", "logits", "non-finite logit"});
      break;
    }
  if (trace.target_class < 0 || trace.target_class >= g.num_classes)
    out.push_back({"", "target_class", "target_class " + std::to_string(trace.target_class) + " out of range"});

  std::set<std::string> ids;
  int counts[4] = {0, 0, 0, 0};
  int stage = 0;
  bool order_reported = false;
  for (const auto& r : trace.records) {
    if (r.record_id.empty() || !is_plain_file_name(r.record_id))
      out.push_back({r.record_id, "record_id", "record_id must be a non-empty plain name"});
    else if (!ids.insert(r.record_id).second)
      out.push_back({r.record_id, "record_id", "duplicate record_id"});

    const int k = static_cast<int>(r.kind);
    if (r.layer_index != counts[k])
      out.push_back({r.record_id, "layer_index", "layer_index " + std::to_string(r.layer_index) + ", expected " +
                                                     std::to_string(counts[k])});
    ++counts[k];

    const int s = stage_of(r.kind);
    if (s < stage && !order_reported) {
      out.push_back({r.record_id, "order", std::string(to_string(r.kind)) + " record after a later-stage record"});
      order_reported = true;
    }
    stage = std::max(stage, s);

    check_record(r, g, geometry_ok, out);
  }

  if (counts[static_cast<int>(RecordKind::spatial)] < 1)
    out.push_back({"", "records", "trace has no spatial record"});
  const int pooling = counts[static_cast<int>(RecordKind::pooling)];
  if (g.extraction_mode == ExtractionMode::pooling && pooling != 1)
    out.push_back({"", "records", "pooling mode needs exactly one pooling record, found " + std::to_string(pooling)});
  if (g.extraction_mode == ExtractionMode::cls && pooling != 0)
    out.push_back({"", "records", "cls mode forbids pooling records"});
  return out;
}

void write_trace(const AttentionTrace& trace, const fs::path& destination) {
  ValidationReport report = validate_trace(trace);
  if (!report.empty()) {
    TraceError err(TraceErrorCode::invariant, report.front().record_id, "invalid trace: " + describe(report.front()));
    err.violations = std::move(report);
    throw err;
  }

  std::error_code ec;
  fs::create_directories(destination, ec);
  if (ec || !fs::is_directory(destination))
    throw TraceError(TraceErrorCode::io, "", "cannot create trace directory " + destination.string());

  json records = json::array();
  try {
    for (const auto& r : trace.records) {
      write_f32(destination / attn_file_name(r), r.attn);
      write_f32(destination / grad_file_name(r), r.grad);
      records.push_back(json{{"record_id", r.record_id},
                             {"kind", std::string(to_string(r.kind))},
                             {"layer_index", r.layer_index},
                             {"attn_file", attn_file_name(r)},
                             {"grad_file", grad_file_name(r)},
                             {"shape", r.attn_shape}});
    }
    json manifest{{"format_version", trace.format_version},
                  {"clip_id", trace.clip_id},
                  {"target_class", trace.target_class},
                  {"logits", trace.logits},
                  {"geometry", geometry_to_json(trace.geometry)},
                  {"records", records}};
    write_text(destination / kManifestName, manifest.dump(2) + "\n");
  } catch (const IoError& e) {
    throw TraceError(TraceErrorCode::io, "", e.what());
  }
}

AttentionTrace read_trace(const fs::path& source) {
  const fs::path manifest_path = source / kManifestName;
  std::error_code ec;
  if (!fs::is_regular_file(manifest_path, ec))
    throw TraceError(TraceErrorCode::missing_manifest, "", "missing manifest: " + manifest_path.string());

  std::string text;
  try {
    text = read_text(manifest_path);
  } catch (const IoError& e) {
    throw TraceError(TraceErrorCode::io, "", e.what());
  }

  AttentionTrace trace;
  try {
    const json m = json::parse(text);
    if (!m.is_object()) malformed("top level is not an object");
    if (!m.contains("format_version") || !m["format_version"].is_string()) malformed("missing format_version");
    trace.format_version = m["format_version"].get<std::string>();
    if (trace.format_version != kTraceFormatVersion)
      throw TraceError(TraceErrorCode::unsupported_version, "",
                       "unsupported format_version '" + trace.format_version + "'");
    require_keys(m, {"format_version", "clip_id", "target_class", "logits", "geometry", "records"}, "manifest");
    trace.clip_id = get_string(m, "clip_id");
    trace.target_class = get_int(m, "target_class", -kMaxCount, kMaxCount);
    const json& logits = m.at("logits");
    if (!logits.is_array()) malformed("'logits' is not an array");
    for (const json& v : logits) {
      if (!v.is_number()) malformed("'logits' entries must be numbers");
      trace.logits.push_back(v.get<double>());
    }
    trace.geometry = geometry_from_json(m.at("geometry"));

    const json& records = m.at("records");
    if (!records.is_array()) malformed("'records' is not an array");
    for (const json& rj : records) {
      require_keys(rj, {"record_id", "kind", "layer_index", "attn_file", "grad_file", "shape"}, "record");
      AttentionRecord r;
      r.record_id = get_string(rj, "record_id");
      const auto kind = parse_record_kind(get_string(rj, "kind"));
      if (!kind)
        throw TraceError(TraceErrorCode::unknown_kind, r.record_id,
                         "record '" + r.record_id + "': unknown kind '" + rj["kind"].get<std::string>() + "'");
      r.kind = *kind;
      r.layer_index = get_int(rj, "layer_index", -kMaxCount, kMaxCount);
      r.attn_shape = get_shape(rj.at("shape"));
      r.grad_shape = r.attn_shape;
      const std::string attn_file = get_string(rj, "attn_file");
      const std::string grad_file = get_string(rj, "grad_file");
      if (!is_plain_file_name(attn_file) || !is_plain_file_name(grad_file))
        throw TraceError(TraceErrorCode::malformed_manifest, r.record_id,
                         "record '" + r.record_id + "': tensor file names must be plain names");
      std::size_t count = 0;
      try {
        count = element_count(r.attn_shape);
      } catch (const Error& e) {
        throw TraceError(TraceErrorCode::malformed_manifest, r.record_id, e.what());
      }
      try {
        r.attn = read_f32(source / attn_file, count);
        r.grad = read_f32(source / grad_file, count);
      } catch (const SizeMismatchError& e) {
        throw TraceError(TraceErrorCode::size_mismatch, r.record_id,
                         "record '" + r.record_id + "': " + e.what());
      } catch (const IoError& e) {
        throw TraceError(TraceErrorCode::io, r.record_id, "record '" + r.record_id + "': " + e.what());
      }
      trace.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw TraceError(TraceErrorCode::malformed_manifest, "", std::string("malformed manifest: ") + e.what());
  }

  ValidationReport report = validate_trace(trace);
  if (!report.empty()) {
    TraceError err(TraceErrorCode::invariant, report.front().record_id, "invalid trace: " + describe(report.front()));
    err.violations = std::move(report);
    throw err;
  }
  return trace;
}

}  // namespace groundlens
