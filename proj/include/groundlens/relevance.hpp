// SPDX-License-Identifier: Apache-2.0
//
// Gradient-weighted relevance propagation for factored space-time
// transformers: the per-frame spatial recurrence (standard Chefer) and the
// temporal extension that propagates relevance across frames at every patch
// position and folds the result into per-frame weights (Chefer-T).
//
// All arithmetic is float64 regardless of trace storage precision.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "groundlens/trace_io.hpp"

namespace groundlens {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Method { chefer, chefer_t };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);

/// mean_h ReLU(grad_h ⊙ attn_h) for a head-major block of `heads` matrices of
/// size rows×cols. Throws Error when the spans disagree with the dimensions.
Matrix positive_contribution(std::span<const float> attn, std::span<const float> grad, int heads, int rows,
                             int cols);

/// Token-to-token relevance R_t for one frame: R = I, then R += Ā_l R over
/// the spatial records in forward order. Size N'×N'.
Matrix propagate_spatial(const AttentionTrace& trace, int frame);

/// Patch relevance of one frame (length N). cls mode: row 0 of R without its
/// CLS column. pooling mode: Ā_pool(t) · R.
Vector extract_frame_map(const AttentionTrace& trace, const Matrix& spatial, int frame);

/// One T×T matrix per patch position. Temporal records update position p
/// with their own slice; head_temporal records apply one shared Ā to every
/// position.
std::vector<Matrix> propagate_temporal(const AttentionTrace& trace);

/// Raw frame weights w_t = (1/(N·T)) Σ_p Σ_t' R_p[t', t].
Vector temporal_weights(const std::vector<Matrix>& temporal);

/// (v - min) / (max - min); a constant vector maps to all zeros.
Vector min_max_normalize(const Vector& values);

/// Bilinear resize with half-pixel-centre alignment and edge clamping. Output
/// pixel (i, j) samples grid coordinate ((i + 0.5)·gh/H - 0.5, (j + 0.5)·gw/W - 0.5).
/// `grid` is row-major gh×gw; the result is row-major H×W.
std::vector<double> bilinear_upsample(std::span<const double> grid, int grid_h, int grid_w, int out_h, int out_w);

struct RelevanceVolume {
  std::string clip_id;
  int target_class = 0;
  Method method = Method::chefer_t;
  int frames = 0;
  int grid_h = 0;
  int grid_w = 0;
  int pixel_H = 0;
  int pixel_W = 0;
  std::vector<double> maps;              // [T, pixel_H, pixel_W]
  std::vector<double> grids;             // [T, grid_h, grid_w], before upsampling
  std::vector<double> temporal_weights;  // w_t / max w (all ones for chefer)

  std::span<const double> frame(int t) const {
    const auto size = static_cast<std::size_t>(pixel_H) * pixel_W;
    return std::span<const double>(maps).subspan(static_cast<std::size_t>(t) * size, size);
  }
};

/// Ĥ_t = MinMax(H_t) · w_t / max w, reshaped row-major onto the patch grid
/// and upsampled to pixel resolution. max w = 0 yields an all-zero volume.
RelevanceVolume combine(const std::vector<Vector>& frame_maps, const Vector& weights, const ModelGeometry& geometry);

/// Full pipeline. chefer: spatial propagation and extraction per frame, no
/// temporal scaling. chefer_t: additionally the per-position temporal
/// propagation (including classifier-head blocks) and the frame weighting.
RelevanceVolume attribute(const AttentionTrace& trace, Method method);

}  // namespace groundlens
