// SPDX-License-Identifier: Apache-2.0
#include "groundlens/relevance.hpp"

#include <algorithm>
#include <cmath>

namespace groundlens {

namespace {

std::span<const float> slice(const std::vector<float>& data, std::size_t index, std::size_t size) {
  return std::span<const float>(data).subspan(index * size, size);
}

const AttentionRecord& pooling_record(const AttentionTrace& trace) {
  for (const auto& r : trace.records)
    if (r.kind == RecordKind::pooling) return r;
  throw Error("trace '" + trace.clip_id + "' is in pooling mode but has no pooling record");
}

}  // namespace

std::string_view to_string(Method method) { return method == Method::chefer ? "chefer" : "chefer_t"; }

std::optional<Method> parse_method(std::string_view text) {
  if (text == "chefer") return Method::chefer;
  if (text == "chefer_t") return Method::chefer_t;
  return std::nullopt;
}

Matrix positive_contribution(std::span<const float> attn, std::span<const float> grad, int heads, int rows,
                             int cols) {
  if (heads < 1 || rows < 1 || cols < 1) throw Error("positive_contribution: non-positive dimension");
  const auto block = static_cast<std::size_t>(rows) * cols;
  if (attn.size() != block * heads || grad.size() != attn.size())
    throw Error("positive_contribution: attention/gradient shape mismatch");

  Matrix out = Matrix::Zero(rows, cols);
  for (int h = 0; h < heads; ++h) {
    const std::size_t base = static_cast<std::size_t>(h) * block;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const std::size_t k = base + static_cast<std::size_t>(i) * cols + j;
        out(i, j) += std::max(0.0, static_cast<double>(grad[k]) * static_cast<double>(attn[k]));
      }
  }
  out /= static_cast<double>(heads);
  return out;
}

Matrix propagate_spatial(const AttentionTrace& trace, int frame) {
  const ModelGeometry& g = trace.geometry;
  if (frame < 0 || frame >= g.frames_T) throw Error("propagate_spatial: frame out of range");
  const int n = g.spatial_tokens();
  const std::size_t per_frame = static_cast<std::size_t>(g.heads_K) * n * n;

  Matrix relevance = Matrix::Identity(n, n);
  for (const auto& r : trace.records) {
    if (r.kind != RecordKind::spatial) continue;
    const Matrix contribution =
        positive_contribution(slice(r.attn, frame, per_frame), slice(r.grad, frame, per_frame), g.heads_K, n, n);
    relevance += contribution * relevance;
  }
  return relevance;
}

Vector extract_frame_map(const AttentionTrace& trace, const Matrix& spatial, int frame) {
  const ModelGeometry& g = trace.geometry;
  const int n = g.patch_tokens_N;
  if (spatial.rows() != g.spatial_tokens() || spatial.cols() != g.spatial_tokens())
    throw Error("extract_frame_map: relevance matrix does not match geometry");

  if (g.extraction_mode == ExtractionMode::cls) return spatial.row(0).segment(1, n).transpose();

  const AttentionRecord& pool = pooling_record(trace);
  const std::size_t per_frame = static_cast<std::size_t>(g.heads_K) * n;
  const Matrix probe =
      positive_contribution(slice(pool.attn, frame, per_frame), slice(pool.grad, frame, per_frame), g.heads_K, 1, n);
  return (probe * spatial).transpose();
}

std::vector<Matrix> propagate_temporal(const AttentionTrace& trace) {
  const ModelGeometry& g = trace.geometry;
  const int T = g.frames_T;
  const std::size_t per_position = static_cast<std::size_t>(g.heads_K) * T * T;

  std::vector<Matrix> relevance(static_cast<std::size_t>(g.patch_tokens_N), Matrix::Identity(T, T));
  for (const auto& r : trace.records) {
    if (r.kind != RecordKind::temporal) continue;
    for (int p = 0; p < g.patch_tokens_N; ++p) {
      const Matrix contribution =
          positive_contribution(slice(r.attn, p, per_position), slice(r.grad, p, per_position), g.heads_K, T, T);
      relevance[p] += contribution * relevance[p];
    }
  }
  for (const auto& r : trace.records) {
    if (r.kind != RecordKind::head_temporal) continue;
    const Matrix contribution = positive_contribution(r.attn, r.grad, g.heads_K, T, T);
    for (auto& rp : relevance) rp += contribution * rp;
  }
  return relevance;
}

Vector temporal_weights(const std::vector<Matrix>& temporal) {
  if (temporal.empty()) return Vector();
  const Eigen::Index T = temporal.front().cols();
  Vector w = Vector::Zero(T);
  for (const auto& rp : temporal) {
    if (rp.rows() != T || rp.cols() != T) throw Error("temporal_weights: inconsistent matrix sizes");
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index q = 0; q < T; ++q) w(t) += rp(q, t);
  }
  w /= static_cast<double>(temporal.size()) * static_cast<double>(T);
  return w;
}

Vector min_max_normalize(const Vector& values) {
  if (values.size() == 0) return values;
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) return Vector::Zero(values.size());
  return ((values.array() - lo) / (hi - lo)).matrix();
}

std::vector<double> bilinear_upsample(std::span<const double> grid, int grid_h, int grid_w, int out_h, int out_w) {
  if (grid_h < 1 || grid_w < 1 || out_h < 1 || out_w < 1)
    throw Error("bilinear_upsample: non-positive dimension");
  if (grid.size() != static_cast<std::size_t>(grid_h) * grid_w) throw Error("bilinear_upsample: grid size mismatch");

  auto source = [](int i, int in, int out, int& lo, int& hi, double& frac) {
    double s = ((i + 0.5) * in) / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    lo = static_cast<int>(std::floor(s));
    hi = std::min(lo + 1, in - 1);
    frac = s - lo;
  };

  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int i = 0; i < out_h; ++i) {
    int y0, y1;
    double fy;
    source(i, grid_h, out_h, y0, y1, fy);
    for (int j = 0; j < out_w; ++j) {
      int x0, x1;
      double fx;
      source(j, grid_w, out_w, x0, x1, fx);
      const double top = (1.0 - fx) * grid[y0 * grid_w + x0] + fx * grid[y0 * grid_w + x1];
      const double bottom = (1.0 - fx) * grid[y1 * grid_w + x0] + fx * grid[y1 * grid_w + x1];
      out[static_cast<std::size_t>(i) * out_w + j] = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

RelevanceVolume combine(const std::vector<Vector>& frame_maps, const Vector& weights, const ModelGeometry& geometry) {
  const int T = geometry.frames_T;
  if (static_cast<int>(frame_maps.size()) != T || weights.size() != T)
    throw Error("combine: expected one map and one weight per frame");

  RelevanceVolume v;
  v.frames = T;
  v.grid_h = geometry.grid_h;
  v.grid_w = geometry.grid_w;
  v.pixel_H = geometry.pixel_H;
  v.pixel_W = geometry.pixel_W;
  const auto grid_size = static_cast<std::size_t>(v.grid_h) * v.grid_w;
  const auto pixel_size = static_cast<std::size_t>(v.pixel_H) * v.pixel_W;
  v.grids.reserve(grid_size * T);
  v.maps.reserve(pixel_size * T);

  const double max_w = weights.maxCoeff();
  v.temporal_weights.resize(T);
  for (int t = 0; t < T; ++t) v.temporal_weights[t] = max_w > 0.0 ? weights(t) / max_w : 0.0;

  for (int t = 0; t < T; ++t) {
    if (static_cast<std::size_t>(frame_maps[t].size()) != grid_size)
      throw Error("combine: frame map length does not match the patch grid");
    const Vector normalized = min_max_normalize(frame_maps[t]);
    const double scale = v.temporal_weights[t];
    std::vector<double> grid(grid_size);
    for (std::size_t p = 0; p < grid_size; ++p) grid[p] = normalized(static_cast<Eigen::Index>(p)) * scale;
    const std::vector<double> pixels = bilinear_upsample(grid, v.grid_h, v.grid_w, v.pixel_H, v.pixel_W);
    v.grids.insert(v.grids.end(), grid.begin(), grid.end());
    v.maps.insert(v.maps.end(), pixels.begin(), pixels.end());
  }
  return v;
}

RelevanceVolume attribute(const AttentionTrace& trace, Method method) {
  const ModelGeometry& g = trace.geometry;
  std::vector<Vector> frame_maps;
  frame_maps.reserve(g.frames_T);
  for (int t = 0; t < g.frames_T; ++t) frame_maps.push_back(extract_frame_map(trace, propagate_spatial(trace, t), t));

  const Vector weights =
      method == Method::chefer ? Vector::Ones(g.frames_T) : temporal_weights(propagate_temporal(trace));
  RelevanceVolume v = combine(frame_maps, weights, g);
  v.clip_id = trace.clip_id;
  v.target_class = trace.target_class;
  v.method = method;
  return v;
}

}  // namespace groundlens
