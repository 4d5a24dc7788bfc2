// SPDX-License-Identifier: Apache-2.0
#include "groundlens/toymodel.hpp"

#include <cmath>
#include <type_traits>

#include "groundlens/rng.hpp"
#include "groundlens/tensor_file.hpp"
#include "json.hpp"

namespace groundlens {

using nlohmann::json;

namespace {

constexpr std::string_view kWeightsFormatVersion = "1.0";

// ---------------------------------------------------------------------------
// Multi-head attention with cached intermediates.

struct MhaCache {
  Matrix query_src;  // Lq×D
  Matrix kv_src;     // Lk×D
  Matrix q, k, v;    // projections
  std::vector<Matrix> attn;  // per head, Lq×Lk
};

struct MhaGrads {
  Matrix d_query_src;
  Matrix d_kv_src;
  std::vector<Matrix> d_attn;  // per head
};

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double peak = m.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = std::exp(m(i, j) - peak);
      sum += m(i, j);
    }
    m.row(i) /= sum;
  }
}

/// Returns the attention output (before the residual add). `override_block`,
/// when non-null, points at heads × Lq × Lk replacement probabilities.
Matrix mha_forward(const Matrix& query_src, const Matrix& kv_src, const AttentionWeights& w, int heads,
                   const double* override_block, MhaCache& c) {
  const Eigen::Index D = w.query.cols();
  const Eigen::Index dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index lq = query_src.rows();
  const Eigen::Index lk = kv_src.rows();

  c.query_src = query_src;
  c.kv_src = kv_src;
  c.q = query_src * w.query;
  c.k = kv_src * w.key;
  c.v = kv_src * w.value;
  c.attn.assign(static_cast<std::size_t>(heads), Matrix());

  Matrix concat(lq, D);
  for (int h = 0; h < heads; ++h) {
    Matrix a;
    if (override_block != nullptr) {
      a = Eigen::Map<const Matrix>(override_block + static_cast<std::size_t>(h) * lq * lk, lq, lk);
    } else {
      a = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      softmax_rows(a);
    }
    concat.middleCols(h * dh, dh) = a * c.v.middleCols(h * dh, dh);
    c.attn[h] = std::move(a);
  }
  return concat * w.output;
}

MhaGrads mha_backward(const AttentionWeights& w, int heads, const MhaCache& c, const Matrix& d_out) {
  const Eigen::Index D = w.query.cols();
  const Eigen::Index dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix d_concat = d_out * w.output.transpose();
  Matrix dq = Matrix::Zero(c.q.rows(), D);
  Matrix dk = Matrix::Zero(c.k.rows(), D);
  Matrix dv = Matrix::Zero(c.v.rows(), D);

  MhaGrads g;
  g.d_attn.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Matrix& a = c.attn[h];
    const Matrix d_o = d_concat.middleCols(h * dh, dh);
    Matrix d_a = d_o * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * d_o;

    Matrix d_scores(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double inner = a.row(i).dot(d_a.row(i));
      d_scores.row(i) = a.row(i).array() * (d_a.row(i).array() - inner);
    }
    dq.middleCols(h * dh, dh) = (d_scores * c.k.middleCols(h * dh, dh)) * scale;
    dk.middleCols(h * dh, dh) = (d_scores.transpose() * c.q.middleCols(h * dh, dh)) * scale;
    g.d_attn[h] = std::move(d_a);
  }
  g.d_query_src = dq * w.query.transpose();
  g.d_kv_src = dk * w.key.transpose() + dv * w.value.transpose();
  return g;
}

void append_heads(const std::vector<Matrix>& per_head, std::vector<double>& out) {
  for (const Matrix& m : per_head)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------

template <typename Weights>
auto tensor_list(Weights& w) {
  using Ptr = std::conditional_t<std::is_const_v<Weights>, const Matrix*, Matrix*>;
  std::vector<std::pair<std::string, Ptr>> out;
  auto attention = [&](const std::string& prefix, auto& a) {
    out.emplace_back(prefix + ".query", &a.query);
    out.emplace_back(prefix + ".key", &a.key);
    out.emplace_back(prefix + ".value", &a.value);
    out.emplace_back(prefix + ".output", &a.output);
  };
  out.emplace_back("patch_projection", &w.patch_projection);
  for (std::size_t b = 0; b < w.temporal.size(); ++b) {
    attention("block" + std::to_string(b) + ".temporal", w.temporal[b]);
    attention("block" + std::to_string(b) + ".spatial", w.spatial[b]);
  }
  const bool pooling = w.config.mode == ExtractionMode::pooling;
  out.emplace_back(pooling ? "pooling_probe" : "cls_token", &w.summary_token);
  if (pooling) attention("pooling", w.pooling);
  for (std::size_t l = 0; l < w.head.size(); ++l) attention("head" + std::to_string(l), w.head[l]);
  out.emplace_back("classifier", &w.classifier);
  return out;
}

void shape_weights(ToyModelWeights& w) {
  const ToyModelConfig& c = w.config;
  const int D = c.width;
  auto attention = [&] {
    return AttentionWeights{Matrix(D, D), Matrix(D, D), Matrix(D, D), Matrix(D, D)};
  };
  w.patch_projection = Matrix(c.input_dim(), D);
  w.temporal.clear();
  w.spatial.clear();
  for (int b = 0; b < c.blocks; ++b) {
    w.temporal.push_back(attention());
    w.spatial.push_back(attention());
  }
  w.summary_token = Matrix(1, D);
  if (c.mode == ExtractionMode::pooling) w.pooling = attention();
  w.head.clear();
  for (int l = 0; l < c.head_blocks; ++l) w.head.push_back(attention());
  w.classifier = Matrix(D, c.num_classes);
}

json config_to_json(const ToyModelConfig& c) {
  return json{{"frames", c.frames},         {"grid_h", c.grid_h},
              {"grid_w", c.grid_w},         {"heads", c.heads},
              {"width", c.width},           {"blocks", c.blocks},
              {"num_classes", c.num_classes}, {"head_blocks", c.head_blocks},
              {"patch_size", c.patch_size}, {"mode", std::string(to_string(c.mode))},
              {"seed", c.seed}};
}

ToyModelConfig config_from_json(const json& j) {
  ToyModelConfig c;
  c.frames = j.at("frames").get<int>();
  c.grid_h = j.at("grid_h").get<int>();
  c.grid_w = j.at("grid_w").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.head_blocks = j.at("head_blocks").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  const auto mode = parse_extraction_mode(j.at("mode").get<std::string>());
  if (!mode) throw ModelError("weights: unknown mode");
  c.mode = *mode;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// One forward pass with everything backward() needs.

class Pass {
 public:
  Pass(const ToyModelWeights& w, const ClipTokens& tokens, const AttentionOverrides* overrides)
      : w_(w), c_(w.config), overrides_(overrides) {
    T_ = c_.frames;
    N_ = c_.patches();
    offset_ = c_.mode == ExtractionMode::cls ? 1 : 0;
    Np_ = N_ + offset_;
    K_ = c_.heads;
    check_tokens(tokens);
    if (overrides_) check_overrides();
    run(tokens);
  }

  ForwardResult result() const {
    ForwardResult r;
    r.logits = logits_;
    r.frame_embeddings = embeddings_;
    r.head_output = head_output_;
    for (int b = 0; b < c_.blocks; ++b) {
      r.attentions.push_back(capture(temporal_id(b), RecordKind::temporal, b, temporal_[b]));
      r.attentions.push_back(capture(spatial_id(b), RecordKind::spatial, b, spatial_[b]));
    }
    if (c_.mode == ExtractionMode::pooling) r.attentions.push_back(capture("pooling", RecordKind::pooling, 0, pool_));
    for (int l = 0; l < c_.head_blocks; ++l)
      r.attentions.push_back(capture(head_id(l), RecordKind::head_temporal, l, {head_[l]}));
    return r;
  }

  BackwardResult backward(int target) const {
    if (target < 0 || target >= c_.num_classes) throw ModelError("backward: target class out of range");
    BackwardResult out;
    out.forward = result();

    std::vector<std::vector<Matrix>> d_temporal(c_.blocks), d_spatial(c_.blocks);
    std::vector<Matrix> d_pool, d_head(c_.head_blocks);

    // logits = mean_t(E_t) · W_cls
    const Matrix d_z = w_.classifier.col(target).transpose();
    Matrix d_e(T_, c_.width);
    for (int t = 0; t < T_; ++t) d_e.row(t) = d_z / static_cast<double>(T_);

    std::vector<std::vector<Matrix>> head_attn_grads(c_.head_blocks);
    for (int l = c_.head_blocks - 1; l >= 0; --l) {
      MhaGrads g = mha_backward(w_.head[l], K_, head_[l], d_e);
      d_e += g.d_query_src + g.d_kv_src;
      head_attn_grads[l] = std::move(g.d_attn);
    }

    std::vector<Matrix> d_x(T_, Matrix::Zero(Np_, c_.width));
    std::vector<std::vector<Matrix>> pool_grads;
    for (int t = 0; t < T_; ++t) {
      if (c_.mode == ExtractionMode::pooling) {
        MhaGrads g = mha_backward(w_.pooling, K_, pool_[t], d_e.row(t));
        d_x[t].bottomRows(N_) += g.d_kv_src;
        pool_grads.push_back(std::move(g.d_attn));
      } else {
        d_x[t].row(0) += d_e.row(t);
      }
    }

    std::vector<std::vector<std::vector<Matrix>>> temporal_grads(c_.blocks), spatial_grads(c_.blocks);
    for (int b = c_.blocks - 1; b >= 0; --b) {
      spatial_grads[b].resize(T_);
      for (int t = 0; t < T_; ++t) {
        MhaGrads g = mha_backward(w_.spatial[b], K_, spatial_[b][t], d_x[t]);
        d_x[t] += g.d_query_src + g.d_kv_src;
        spatial_grads[b][t] = std::move(g.d_attn);
      }
      temporal_grads[b].resize(N_);
      for (int p = 0; p < N_; ++p) {
        Matrix d_seq(T_, c_.width);
        for (int t = 0; t < T_; ++t) d_seq.row(t) = d_x[t].row(p + offset_);
        MhaGrads g = mha_backward(w_.temporal[b], K_, temporal_[b][p], d_seq);
        d_seq += g.d_query_src + g.d_kv_src;
        for (int t = 0; t < T_; ++t) d_x[t].row(p + offset_) = d_seq.row(t);
        temporal_grads[b][p] = std::move(g.d_attn);
      }
    }

    out.input_grad.reserve(T_);
    for (int t = 0; t < T_; ++t) out.input_grad.push_back(d_x[t].bottomRows(N_) * w_.patch_projection.transpose());

    for (int b = 0; b < c_.blocks; ++b) {
      out.attention_grads.push_back(pack(temporal_id(b), RecordKind::temporal, b, temporal_[b], temporal_grads[b]));
      out.attention_grads.push_back(pack(spatial_id(b), RecordKind::spatial, b, spatial_[b], spatial_grads[b]));
    }
    if (c_.mode == ExtractionMode::pooling)
      out.attention_grads.push_back(pack("pooling", RecordKind::pooling, 0, pool_, pool_grads));
    for (int l = 0; l < c_.head_blocks; ++l)
      out.attention_grads.push_back(pack(head_id(l), RecordKind::head_temporal, l, {head_[l]}, {head_attn_grads[l]}));
    return out;
  }

 private:
  static std::string temporal_id(int b) { return "temporal_" + std::to_string(b); }
  static std::string spatial_id(int b) { return "spatial_" + std::to_string(b); }
  static std::string head_id(int l) { return "head_temporal_" + std::to_string(l); }

  Shape shape_of(RecordKind kind) const { return expected_shape(kind, c_.geometry()); }

  void check_tokens(const ClipTokens& tokens) const {
    if (static_cast<int>(tokens.size()) != T_) throw ModelError("forward: expected " + std::to_string(T_) + " frames");
    for (const Matrix& m : tokens)
      if (m.rows() != N_ || m.cols() != c_.input_dim())
        throw ModelError("forward: token matrix must be " + std::to_string(N_) + "x" + std::to_string(c_.input_dim()));
  }

  void check_overrides() const {
    for (const auto& [id, data] : *overrides_) {
      RecordKind kind;
      if (id.rfind("temporal_", 0) == 0)
        kind = RecordKind::temporal;
      else if (id.rfind("spatial_", 0) == 0)
        kind = RecordKind::spatial;
      else if (id == "pooling" && c_.mode == ExtractionMode::pooling)
        kind = RecordKind::pooling;
      else if (id.rfind("head_temporal_", 0) == 0)
        kind = RecordKind::head_temporal;
      else
        throw ModelError("override for unknown record '" + id + "'");
      if (data.size() != element_count(shape_of(kind)))
        throw ModelError("override for '" + id + "' has " + std::to_string(data.size()) + " values, expected " +
                         std::to_string(element_count(shape_of(kind))));
    }
  }

  const double* override_for(const std::string& id, std::size_t slice, std::size_t slice_size) const {
    if (!overrides_) return nullptr;
    const auto it = overrides_->find(id);
    if (it == overrides_->end()) return nullptr;
    return it->second.data() + slice * slice_size;
  }

  void run(const ClipTokens& tokens) {
    const int D = c_.width;
    std::vector<Matrix> x(T_);
    for (int t = 0; t < T_; ++t) {
      x[t] = Matrix(Np_, D);
      if (offset_) x[t].row(0) = w_.summary_token;
      x[t].bottomRows(N_) = tokens[t] * w_.patch_projection;
    }

    temporal_.assign(c_.blocks, {});
    spatial_.assign(c_.blocks, {});
    for (int b = 0; b < c_.blocks; ++b) {
      const std::string tid = temporal_id(b);
      temporal_[b].resize(N_);
      for (int p = 0; p < N_; ++p) {
        Matrix seq(T_, D);
        for (int t = 0; t < T_; ++t) seq.row(t) = x[t].row(p + offset_);
        const Matrix out = mha_forward(seq, seq, w_.temporal[b], K_,
                                       override_for(tid, p, static_cast<std::size_t>(K_) * T_ * T_), temporal_[b][p]);
        for (int t = 0; t < T_; ++t) x[t].row(p + offset_) += out.row(t);
      }
      const std::string sid = spatial_id(b);
      spatial_[b].resize(T_);
      for (int t = 0; t < T_; ++t) {
        const Matrix in = x[t];
        x[t] += mha_forward(in, in, w_.spatial[b], K_,
                            override_for(sid, t, static_cast<std::size_t>(K_) * Np_ * Np_), spatial_[b][t]);
      }
      for (int t = 0; t < T_; ++t)
        if (!all_finite(x[t])) throw ModelError("non-finite activation in block " + std::to_string(b));
    }

    embeddings_ = Matrix(T_, D);
    if (c_.mode == ExtractionMode::pooling) {
      pool_.resize(T_);
      for (int t = 0; t < T_; ++t) {
        const Matrix patches = x[t].bottomRows(N_);
        embeddings_.row(t) = mha_forward(w_.summary_token, patches, w_.pooling, K_,
                                         override_for("pooling", t, static_cast<std::size_t>(K_) * N_), pool_[t]);
      }
    } else {
      for (int t = 0; t < T_; ++t) embeddings_.row(t) = x[t].row(0);
    }
    if (!all_finite(embeddings_)) throw ModelError("non-finite frame embedding");

    Matrix e = embeddings_;
    head_.resize(c_.head_blocks);
    for (int l = 0; l < c_.head_blocks; ++l) {
      const Matrix in = e;
      e += mha_forward(in, in, w_.head[l], K_, override_for(head_id(l), 0, 0), head_[l]);
      if (!all_finite(e)) throw ModelError("non-finite activation in head block " + std::to_string(l));
    }
    head_output_ = e;

    Matrix z = Matrix::Zero(1, D);
    for (int t = 0; t < T_; ++t) z += e.row(t);
    z /= static_cast<double>(T_);
    logits_ = (z * w_.classifier).transpose();
    if (!logits_.allFinite()) throw ModelError("non-finite logits");
  }

  CapturedTensor capture(const std::string& id, RecordKind kind, int layer, const std::vector<MhaCache>& calls) const {
    CapturedTensor c{id, kind, layer, shape_of(kind), {}};
    c.data.reserve(element_count(c.shape));
    for (const auto& call : calls) append_heads(call.attn, c.data);
    return c;
  }

  CapturedTensor pack(const std::string& id, RecordKind kind, int layer, const std::vector<MhaCache>&,
                      const std::vector<std::vector<Matrix>>& grads) const {
    CapturedTensor c{id, kind, layer, shape_of(kind), {}};
    c.data.reserve(element_count(c.shape));
    for (const auto& g : grads) append_heads(g, c.data);
    return c;
  }

  const ToyModelWeights& w_;
  const ToyModelConfig& c_;
  const AttentionOverrides* overrides_;
  int T_ = 0, N_ = 0, Np_ = 0, K_ = 0, offset_ = 0;

  std::vector<std::vector<MhaCache>> temporal_;  // [block][position]
  std::vector<std::vector<MhaCache>> spatial_;   // [block][frame]
  std::vector<MhaCache> pool_;                   // [frame]
  std::vector<MhaCache> head_;                   // [head block]
  Matrix embeddings_, head_output_;
  Vector logits_;
};

}  // namespace

void ToyModelConfig::validate() const {
  auto in_range = [](int v, int lo, int hi, const char* name) {
    if (v < lo || v > hi)
      throw Error(std::string("toy config: ") + name + " must be in [" + std::to_string(lo) + ", " +
                  std::to_string(hi) + "], got " + std::to_string(v));
  };
  in_range(frames, 1, 256, "frames");
  in_range(grid_h, 1, 64, "grid_h");
  in_range(grid_w, 1, 64, "grid_w");
  in_range(heads, 1, 64, "heads");
  in_range(width, 1, 1024, "width");
  in_range(blocks, 1, 64, "blocks");
  in_range(num_classes, 1, 1024, "num_classes");
  in_range(head_blocks, 1, 64, "head_blocks");
  in_range(patch_size, 1, 64, "patch_size");
  if (width % heads != 0) throw Error("toy config: width must be divisible by heads");
}

ModelGeometry ToyModelConfig::geometry() const {
  ModelGeometry g;
  g.frames_T = frames;
  g.patch_tokens_N = patches();
  g.heads_K = heads;
  g.grid_h = grid_h;
  g.grid_w = grid_w;
  g.pixel_H = pixel_h();
  g.pixel_W = pixel_w();
  g.extraction_mode = mode;
  g.num_classes = num_classes;
  return g;
}

std::vector<std::pair<std::string, const Matrix*>> ToyModelWeights::tensors() const { return tensor_list(*this); }

ToyModelWeights init_weights(const ToyModelConfig& config, std::uint64_t seed) {
  config.validate();
  ToyModelWeights w;
  w.config = config;
  w.config.seed = seed;
  shape_weights(w);
  SplitMix64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.width));
  for (auto& [name, m] : tensor_list(w))
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = rng.symmetric(scale);
  return w;
}

void save_weights(const ToyModelWeights& w, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  json tensors = json::array();
  for (const auto& [name, m] : w.tensors()) {
    const std::string file = name + ".f64";
    write_f64(dir / file, std::span<const double>(m->data(), static_cast<std::size_t>(m->size())));
    tensors.push_back(json{{"name", name}, {"file", file}, {"shape", {m->rows(), m->cols()}}});
  }
  const json manifest{{"format_version", kWeightsFormatVersion},
                      {"precision", "float64"},
                      {"layout", "row-major, applied as x·W"},
                      {"config", config_to_json(w.config)},
                      {"tensors", tensors}};
  write_text(dir / "weights_manifest.json", manifest.dump(2) + "\n");
}

ToyModelWeights load_weights(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "weights_manifest.json"));
    if (manifest.at("format_version").get<std::string>() != kWeightsFormatVersion)
      throw ModelError("weights: unsupported format_version");
    if (manifest.at("precision").get<std::string>() != "float64") throw ModelError("weights: precision must be float64");
    ToyModelWeights w;
    w.config = config_from_json(manifest.at("config"));
    w.config.validate();
    shape_weights(w);
    std::map<std::string, std::pair<std::string, Shape>> files;
    for (const json& t : manifest.at("tensors"))
      files[t.at("name").get<std::string>()] = {t.at("file").get<std::string>(), t.at("shape").get<Shape>()};
    for (auto& [name, m] : tensor_list(w)) {
      const auto it = files.find(name);
      if (it == files.end()) throw ModelError("weights: missing tensor '" + name + "'");
      const Shape want{static_cast<std::size_t>(m->rows()), static_cast<std::size_t>(m->cols())};
      if (it->second.second != want) throw ModelError("weights: tensor '" + name + "' has the wrong shape");
      if (!is_plain_file_name(it->second.first)) throw ModelError("weights: bad file name for '" + name + "'");
      const std::vector<double> data = read_f64(dir / it->second.first, static_cast<std::size_t>(m->size()));
      *m = Eigen::Map<const Matrix>(data.data(), m->rows(), m->cols());
    }
    return w;
  } catch (const json::exception& e) {
    throw ModelError(std::string("weights: malformed manifest: ") + e.what());
  }
}

ForwardResult forward(const ToyModelWeights& weights, const ClipTokens& tokens) {
  return Pass(weights, tokens, nullptr).result();
}

ForwardResult forward_from_attention(const ToyModelWeights& weights, const ClipTokens& tokens,
                                     const AttentionOverrides& overrides) {
  return Pass(weights, tokens, &overrides).result();
}

BackwardResult backward(const ToyModelWeights& weights, const ClipTokens& tokens, int target_class) {
  return Pass(weights, tokens, nullptr).backward(target_class);
}

AttentionTrace emit_trace(const ToyModelWeights& weights, const ClipTokens& tokens, int target_class,
                          const std::string& clip_id) {
  const BackwardResult r = backward(weights, tokens, target_class);
  AttentionTrace trace;
  trace.geometry = weights.config.geometry();
  trace.clip_id = clip_id;
  trace.target_class = target_class;
  trace.logits.assign(r.forward.logits.data(), r.forward.logits.data() + r.forward.logits.size());
  for (std::size_t i = 0; i < r.forward.attentions.size(); ++i) {
    const CapturedTensor& a = r.forward.attentions[i];
    const CapturedTensor& g = r.attention_grads[i];
    AttentionRecord rec;
    rec.record_id = a.record_id;
    rec.kind = a.kind;
    rec.layer_index = a.layer_index;
    rec.attn_shape = a.shape;
    rec.grad_shape = g.shape;
    rec.attn.assign(a.data.begin(), a.data.end());
    rec.grad.assign(g.data.begin(), g.data.end());
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace groundlens
