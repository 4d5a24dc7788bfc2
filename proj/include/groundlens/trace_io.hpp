// SPDX-License-Identifier: Apache-2.0
//
// Attention-trace container: the record of one clip's forward/backward pass
// (post-softmax attention tensors and their gradients w.r.t. the target
// logit), stored as a directory holding `manifest.json` plus one raw
// little-endian float32 file per tensor.
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundlens/error.hpp"
#include "groundlens/tensor_file.hpp"

namespace groundlens {

inline constexpr std::string_view kTraceFormatVersion = "1.0";
inline constexpr double kRowSumTolerance = 1e-4;

enum class ExtractionMode { cls, pooling };

std::string_view to_string(ExtractionMode mode);
std::optional<ExtractionMode> parse_extraction_mode(std::string_view text);

struct ModelGeometry {
  int frames_T = 1;
  int patch_tokens_N = 1;
  int heads_K = 1;
  int grid_h = 1;
  int grid_w = 1;
  int pixel_H = 1;
  int pixel_W = 1;
  ExtractionMode extraction_mode = ExtractionMode::pooling;
  int num_classes = 1;

  /// Tokens per frame seen by spatial attention: N, or N+1 with a CLS token
  /// at index 0.
  int spatial_tokens() const { return patch_tokens_N + (extraction_mode == ExtractionMode::cls ? 1 : 0); }

  bool operator==(const ModelGeometry&) const = default;
};

enum class RecordKind { spatial, temporal, pooling, head_temporal };

std::string_view to_string(RecordKind kind);
std::optional<RecordKind> parse_record_kind(std::string_view text);

/// Shape a record of `kind` must have under `geometry`:
///   spatial [T,K,N',N'], temporal [N,K,T,T], pooling [T,K,1,N],
///   head_temporal [K,T,T].
Shape expected_shape(RecordKind kind, const ModelGeometry& geometry);

struct AttentionRecord {
  std::string record_id;
  RecordKind kind = RecordKind::spatial;
  int layer_index = 0;  // ordinal among records of the same kind
  Shape attn_shape;
  Shape grad_shape;
  std::vector<float> attn;
  std::vector<float> grad;
};

struct AttentionTrace {
  std::string format_version{kTraceFormatVersion};
  ModelGeometry geometry;
  std::string clip_id;
  int target_class = 0;
  std::vector<double> logits;
  std::vector<AttentionRecord> records;  // forward order

  /// Records of one kind, in forward order.
  std::vector<const AttentionRecord*> records_of(RecordKind kind) const;
};

struct Violation {
  std::string record_id;  // empty for trace-level problems
  std::string check;      // short machine-readable name, e.g. "row_sum"
  std::string detail;
};

using ValidationReport = std::vector<Violation>;

/// Collects every invariant violation; never stops at the first one.
ValidationReport validate_trace(const AttentionTrace& trace);

enum class TraceErrorCode {
  io,
  missing_manifest,
  malformed_manifest,
  unsupported_version,
  unknown_kind,
  size_mismatch,
  invariant,
};

std::string_view to_string(TraceErrorCode code);

class TraceError : public Error {
 public:
  TraceError(TraceErrorCode code, std::string record_id, const std::string& message);

  TraceErrorCode code;
  std::string record_id;
  ValidationReport violations;  // populated for TraceErrorCode::invariant
};

/// Writes `trace` into `destination` (created if absent). Validates first and
/// throws TraceError(invariant) without touching the disk when invalid.
void write_trace(const AttentionTrace& trace, const fs::path& destination);

/// Reads and fully validates a trace directory.
AttentionTrace read_trace(const fs::path& source);

}  // namespace groundlens
