// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <unistd.h>

#include "groundlens/cli.hpp"
#include "groundlens/fixtures.hpp"
#include "json.hpp"

namespace groundlens::testing {

// ---------------------------------------------------------------------------
// Files

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("groundlens_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string compare_trees(const fs::path& a, const fs::path& b) {
  const auto fa = list_files(a);
  const auto fb = list_files(b);
  if (fa != fb) {
    std::vector<std::string> diff;
    std::set_symmetric_difference(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(diff));
    return "file lists differ" + (diff.empty() ? std::string() : ", e.g. " + diff.front());
  }
  for (const auto& f : fa)
    if (read_bytes(a / f) != read_bytes(b / f)) return "contents differ: " + f;
  return {};
}

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

// ---------------------------------------------------------------------------
// Random traces

namespace {

void softmax_rows(std::vector<float>& out, std::size_t rows, std::size_t cols, SplitMix64& rng) {
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(cols);
    double peak = -1e300;
    for (auto& v : row) {
      v = rng.symmetric(3.0);
      peak = std::max(peak, v);
    }
    double sum = 0.0;
    for (auto& v : row) sum += (v = std::exp(v - peak));
    for (double v : row) out.push_back(static_cast<float>(v / sum));
  }
}

AttentionRecord random_record(const std::string& id, RecordKind kind, int layer, const ModelGeometry& g,
                              double grad_scale, SplitMix64& rng) {
  AttentionRecord r;
  r.record_id = id;
  r.kind = kind;
  r.layer_index = layer;
  r.attn_shape = r.grad_shape = expected_shape(kind, g);
  const std::size_t cols = r.attn_shape.back();
  const std::size_t count = element_count(r.attn_shape);
  softmax_rows(r.attn, count / cols, cols, rng);
  for (std::size_t k = 0; k < count; ++k) r.grad.push_back(static_cast<float>(rng.symmetric(grad_scale)));
  return r;
}

}  // namespace

AttentionTrace random_trace(const RandomTraceSpec& spec, SplitMix64& rng) {
  AttentionTrace t;
  t.geometry = spec.geometry;
  t.clip_id = "random";
  t.target_class = rng.range(0, spec.geometry.num_classes - 1);
  for (int c = 0; c < spec.geometry.num_classes; ++c) t.logits.push_back(rng.symmetric(2.0));
  const int backbone = std::max(spec.spatial_layers, spec.temporal_layers);
  for (int l = 0; l < backbone; ++l) {
    if (l < spec.temporal_layers)
      t.records.push_back(random_record("temporal_" + std::to_string(l), RecordKind::temporal, l, spec.geometry,
                                        spec.grad_scale, rng));
    if (l < spec.spatial_layers)
      t.records.push_back(random_record("spatial_" + std::to_string(l), RecordKind::spatial, l, spec.geometry,
                                        spec.grad_scale, rng));
  }
  if (spec.geometry.extraction_mode == ExtractionMode::pooling)
    t.records.push_back(random_record("pooling", RecordKind::pooling, 0, spec.geometry, spec.grad_scale, rng));
  for (int l = 0; l < spec.head_layers; ++l)
    t.records.push_back(random_record("head_temporal_" + std::to_string(l), RecordKind::head_temporal, l,
                                      spec.geometry, spec.grad_scale, rng));
  return t;
}

RandomTraceSpec random_spec(SplitMix64& rng) {
  RandomTraceSpec s;
  ModelGeometry& g = s.geometry;
  g.frames_T = rng.range(1, 4);
  g.grid_h = rng.range(1, 3);
  g.grid_w = rng.range(1, 3);
  g.patch_tokens_N = g.grid_h * g.grid_w;
  g.heads_K = rng.range(1, 2);
  g.pixel_H = g.grid_h * rng.range(1, 5) + rng.range(0, 2);
  g.pixel_W = g.grid_w * rng.range(1, 5) + rng.range(0, 2);
  g.extraction_mode = rng.range(0, 1) ? ExtractionMode::pooling : ExtractionMode::cls;
  g.num_classes = rng.range(1, 4);
  s.spatial_layers = rng.range(1, 3);
  s.temporal_layers = rng.range(0, 3);
  s.head_layers = rng.range(0, 3);
  s.grad_scale = 0.5 + 2.5 * rng.uniform();
  return s;
}

// ---------------------------------------------------------------------------
// Reference propagation

namespace {

Dense identity(int n) {
  Dense m(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

/// R + Ā·R with Ā read from a head-major block starting at `base`.
Dense update(const Dense& R, const AttentionRecord& rec, std::size_t base, int heads) {
  const int n = static_cast<int>(R.size());
  Dense abar(n, std::vector<double>(n, 0.0));
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const std::size_t k = base + (static_cast<std::size_t>(h) * n + i) * n + j;
        const double prod = static_cast<double>(rec.grad[k]) * static_cast<double>(rec.attn[k]);
        abar[i][j] += prod > 0.0 ? prod : 0.0;
      }
  for (auto& row : abar)
    for (auto& v : row) v /= heads;
  Dense out = R;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += abar[i][k] * R[k][j];
      out[i][j] += s;
    }
  return out;
}

double tent(double d) { return std::max(0.0, 1.0 - std::fabs(d)); }

}  // namespace

Dense oracle_spatial(const AttentionTrace& trace, int frame) {
  const ModelGeometry& g = trace.geometry;
  const int n = g.patch_tokens_N + (g.extraction_mode == ExtractionMode::cls ? 1 : 0);
  Dense R = identity(n);
  for (const auto& rec : trace.records)
    if (rec.kind == RecordKind::spatial)
      R = update(R, rec, static_cast<std::size_t>(frame) * g.heads_K * n * n, g.heads_K);
  return R;
}

std::vector<Dense> oracle_temporal(const AttentionTrace& trace) {
  const ModelGeometry& g = trace.geometry;
  const int T = g.frames_T;
  std::vector<Dense> out;
  for (int p = 0; p < g.patch_tokens_N; ++p) {
    Dense R = identity(T);
    for (const auto& rec : trace.records)
      if (rec.kind == RecordKind::temporal)
        R = update(R, rec, static_cast<std::size_t>(p) * g.heads_K * T * T, g.heads_K);
    for (const auto& rec : trace.records)
      if (rec.kind == RecordKind::head_temporal) R = update(R, rec, 0, g.heads_K);
    out.push_back(R);
  }
  return out;
}

std::vector<double> oracle_attribute(const AttentionTrace& trace, Method method) {
  const ModelGeometry& g = trace.geometry;
  const int T = g.frames_T, N = g.patch_tokens_N, K = g.heads_K;

  // Per-frame patch relevance.
  std::vector<std::vector<double>> H(T, std::vector<double>(N, 0.0));
  for (int t = 0; t < T; ++t) {
    const Dense R = oracle_spatial(trace, t);
    if (g.extraction_mode == ExtractionMode::cls) {
      for (int j = 0; j < N; ++j) H[t][j] = R[0][j + 1];
    } else {
      const AttentionRecord* pool = nullptr;
      for (const auto& rec : trace.records)
        if (rec.kind == RecordKind::pooling) pool = &rec;
      std::vector<double> probe(N, 0.0);
      for (int h = 0; h < K; ++h)
        for (int i = 0; i < N; ++i) {
          const std::size_t k = (static_cast<std::size_t>(t) * K + h) * N + i;
          const double prod = static_cast<double>(pool->grad[k]) * static_cast<double>(pool->attn[k]);
          probe[i] += prod > 0.0 ? prod : 0.0;
        }
      for (auto& v : probe) v /= K;
      for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) H[t][j] += probe[i] * R[i][j];
    }
  }

  // Frame weights.
  std::vector<double> w(T, 1.0);
  if (method == Method::chefer_t) {
    const auto Rt = oracle_temporal(trace);
    for (int t = 0; t < T; ++t) {
      double s = 0.0;
      for (int p = 0; p < N; ++p)
        for (int q = 0; q < T; ++q) s += Rt[p][q][t];
      w[t] = s / (static_cast<double>(N) * T);
    }
  }
  const double wmax = *std::max_element(w.begin(), w.end());

  std::vector<double> out;
  for (int t = 0; t < T; ++t) {
    const double lo = *std::min_element(H[t].begin(), H[t].end());
    const double hi = *std::max_element(H[t].begin(), H[t].end());
    std::vector<double> grid(N, 0.0);
    for (int p = 0; p < N; ++p) {
      const double norm = hi > lo ? (H[t][p] - lo) / (hi - lo) : 0.0;
      grid[p] = wmax > 0.0 ? norm * (w[t] / wmax) : 0.0;
    }
    for (int i = 0; i < g.pixel_H; ++i) {
      const double sy = std::clamp((i + 0.5) * g.grid_h / g.pixel_H - 0.5, 0.0, g.grid_h - 1.0);
      for (int j = 0; j < g.pixel_W; ++j) {
        const double sx = std::clamp((j + 0.5) * g.grid_w / g.pixel_W - 0.5, 0.0, g.grid_w - 1.0);
        double v = 0.0;
        for (int r = 0; r < g.grid_h; ++r)
          for (int c = 0; c < g.grid_w; ++c) v += tent(sy - r) * tent(sx - c) * grid[r * g.grid_w + c];
        out.push_back(v);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference metrics

double oracle_energy(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w) {
  double inside = 0.0, total = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      total += map[i * w + j];
      if (mask[i * w + j]) inside += map[i * w + j];
    }
  return total > 0.0 ? inside / total : 0.0;
}

int oracle_pointing(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w) {
  int bi = 0, bj = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (map[i * w + j] > map[bi * w + bj]) {
        bi = i;
        bj = j;
      }
  if (map[bi * w + bj] <= 0.0) return 0;
  return mask[bi * w + bj] ? 1 : 0;
}

double oracle_s_iou(const std::vector<double>& map, const std::vector<std::uint8_t>& mask, int h, int w) {
  double peak = 0.0;
  for (double v : map) peak = std::max(peak, v);
  std::set<int> predicted, truth;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (peak > 0.0 && map[i * w + j] >= 0.5 * peak) predicted.insert(i * w + j);
      if (mask[i * w + j]) truth.insert(i * w + j);
    }
  std::set<int> inter, uni;
  std::set_intersection(predicted.begin(), predicted.end(), truth.begin(), truth.end(),
                        std::inserter(inter, inter.end()));
  std::set_union(predicted.begin(), predicted.end(), truth.begin(), truth.end(), std::inserter(uni, uni.end()));
  return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / uni.size();
}

double oracle_t_iou(const RelevanceVolume& v, const ClipAnnotation& a, TierSet tiers) {
  std::set<int> gt, pred;
  std::vector<double> means(v.frames);
  for (int t = 0; t < v.frames; ++t) {
    double s = 0.0;
    for (int i = 0; i < v.pixel_H; ++i)
      for (int j = 0; j < v.pixel_W; ++j) s += v.maps[(static_cast<std::size_t>(t) * v.pixel_H + i) * v.pixel_W + j];
    means[t] = s / (static_cast<double>(v.pixel_H) * v.pixel_W);
    const auto it = a.frames.find(t);
    if (it != a.frames.end())
      for (const CueBox& b : it->second)
        if (tiers.contains(b.tier)) gt.insert(t);
  }
  const double best = *std::max_element(means.begin(), means.end());
  for (int t = 0; t < v.frames; ++t)
    if (best > 0.0 && means[t] >= 0.5 * best) pred.insert(t);
  std::set<int> inter, uni;
  std::set_intersection(gt.begin(), gt.end(), pred.begin(), pred.end(), std::inserter(inter, inter.end()));
  std::set_union(gt.begin(), gt.end(), pred.begin(), pred.end(), std::inserter(uni, uni.end()));
  return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / uni.size();
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

constexpr double kEps = 1e-5;

void score(GradientCheck& c, double analytic, double fd, const std::string& where) {
  const double allowed = std::max(1e-4 * std::max(std::fabs(analytic), std::fabs(fd)), 1e-8);
  const double excess = std::fabs(analytic - fd) - allowed;
  ++c.checked;
  if (excess > 0.0) ++c.failed;
  if (c.checked == 1 || excess > c.worst_excess) {
    c.worst_excess = excess;
    std::ostringstream s;
    s.precision(10);
    s << where << " analytic=" << analytic << " fd=" << fd;
    c.worst = s.str();
  }
}

}  // namespace

GradientCheck check_attention_gradients(const ToyModelWeights& weights, const ClipTokens& tokens, int target) {
  const BackwardResult b = backward(weights, tokens, target);
  GradientCheck c;
  for (std::size_t r = 0; r < b.forward.attentions.size(); ++r) {
    const CapturedTensor& a = b.forward.attentions[r];
    const CapturedTensor& g = b.attention_grads[r];
    for (std::size_t e = 0; e < a.data.size(); ++e) {
      AttentionOverrides o{{a.record_id, a.data}};
      o[a.record_id][e] = a.data[e] + kEps;
      const double plus = forward_from_attention(weights, tokens, o).logits(target);
      o[a.record_id][e] = a.data[e] - kEps;
      const double minus = forward_from_attention(weights, tokens, o).logits(target);
      score(c, g.data[e], (plus - minus) / (2 * kEps), a.record_id + "[" + std::to_string(e) + "]");
    }
  }
  return c;
}

GradientCheck check_input_gradients(const ToyModelWeights& weights, const ClipTokens& tokens, int target) {
  const BackwardResult b = backward(weights, tokens, target);
  GradientCheck c;
  ClipTokens x = tokens;
  for (std::size_t t = 0; t < x.size(); ++t)
    for (Eigen::Index i = 0; i < x[t].rows(); ++i)
      for (Eigen::Index j = 0; j < x[t].cols(); ++j) {
        const double keep = x[t](i, j);
        x[t](i, j) = keep + kEps;
        const double plus = forward(weights, x).logits(target);
        x[t](i, j) = keep - kEps;
        const double minus = forward(weights, x).logits(target);
        x[t](i, j) = keep;
        score(c, b.input_grad[t](i, j), (plus - minus) / (2 * kEps),
              "input[" + std::to_string(t) + "," + std::to_string(i) + "," + std::to_string(j) + "]");
      }
  return c;
}

ClipTokens random_tokens(const ToyModelConfig& config, SplitMix64& rng) {
  ClipTokens tokens;
  for (int t = 0; t < config.frames; ++t) {
    Matrix m(config.patches(), config.input_dim());
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
    tokens.push_back(std::move(m));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Golden artifacts

fs::path build_golden_artifacts(const fs::path& work, unsigned jobs) {
  std::ostringstream sink;
  const fs::path fixtures = work / "fixtures";
  GenToyOptions gen;
  gen.fixture.seed = 42;
  gen.fixture.clips = 8;
  gen.out = fixtures;
  if (cmd_gen_toy(gen, sink, sink) != kExitOk) throw Error("gen-toy failed: " + sink.str());

  PropagateOptions prop{fixtures / "manifest.json", Method::chefer_t, work / "volumes", jobs};
  if (cmd_propagate(prop, sink, sink) != kExitOk) throw Error("propagate failed: " + sink.str());

  EvaluateOptions eval{fixtures / "manifest.json", work / "volumes", work / "evaluation", {}, jobs};
  if (cmd_evaluate(eval, sink, sink) != kExitOk) throw Error("evaluate failed: " + sink.str());

  RenderOptions render{fixtures / "manifest.json", work / "volumes", work / "overlays", OverlaySpec{}, jobs};
  if (cmd_render(render, sink, sink) != kExitOk) throw Error("render failed: " + sink.str());

  const fs::path golden = work / "golden";
  fs::create_directories(golden);
  fs::copy_file(work / "evaluation" / "report.json", golden / "report.json");
  fs::copy_file(work / "evaluation" / "report.txt", golden / "report.txt");
  fs::copy(work / "overlays", golden / "overlays", fs::copy_options::recursive);

  const ToyModelWeights weights = load_weights(fixtures / "weights");
  const ClipTokens tokens = read_tokens(fixtures / "clips" / "clip_000" / "tokens.f64", weights.config);
  const Vector logits = forward(weights, tokens).logits;
  write_text(golden / "logits.json",
             nlohmann::json(std::vector<double>(logits.data(), logits.data() + logits.size())).dump() + "\n");

  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (const auto& [name, m] : weights.tensors()) hash = fnv1a64(read_bytes(fixtures / "weights" / (name + ".f64")), hash);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx\n", static_cast<unsigned long long>(hash));
  write_text(golden / "weights.fnv1a64", hex);
  return golden;
}

SanityResult grounding_sanity(const fs::path& fixture_manifest) {
  const DatasetManifest m = load_dataset_manifest(fixture_manifest);
  SanityResult r;
  for (const ClipEntry& e : m.clips) {
    const AttentionTrace trace = read_trace(e.trace);
    const RelevanceVolume v = attribute(trace, Method::chefer_t);
    const ClipAnnotation a = load_annotations(e.annotation, m.classes, v.frames);
    for (const auto& [t, boxes] : a.frames) {
      const Mask mask = rasterize(boxes, TierSet{Tier::primary}, v.pixel_H, v.pixel_W);
      if (mask.popcount() == 0) continue;
      const auto frame = v.frame(t);
      double in = 0.0, out = 0.0;
      std::size_t n_in = 0, n_out = 0;
      for (std::size_t k = 0; k < frame.size(); ++k) {
        if (mask.bits[k]) {
          in += frame[k];
          ++n_in;
        } else {
          out += frame[k];
          ++n_out;
        }
      }
      ++r.frames;
      if (n_out == 0 || in / n_in > out / n_out) ++r.inside_wins;
    }
  }
  return r;
}

}  // namespace groundlens::testing
