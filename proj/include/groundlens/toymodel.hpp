// SPDX-License-Identifier: Apache-2.0
//
// A small factored space-time transformer with exact reverse-mode gradients
// of a class logit w.r.t. every attention tensor. It stands in for real video
// encoders when generating traces and fixtures.
//
// Per block: temporal MHA across the T frames at each patch position, then
// spatial MHA across the tokens of each frame, both with residual adds and
// without MLP or normalization. Per-frame embeddings come from a learned
// probe attending over the patch tokens (pooling mode) or from a CLS token
// prepended before block 0 (cls mode). Classifier-head temporal MHA blocks
// (residual) mix the T embeddings, which are then averaged and mapped to
// logits by a linear layer. No biases anywhere.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "groundlens/relevance.hpp"
#include "groundlens/trace_io.hpp"

namespace groundlens {

struct ToyModelConfig {
  int frames = 4;
  int grid_h = 3;
  int grid_w = 3;
  int heads = 2;
  int width = 8;  // model width D, divisible by heads
  int blocks = 2;
  int num_classes = 4;
  int head_blocks = 1;  // classifier-head temporal blocks, >= 1
  int patch_size = 7;   // pixels per patch side; input features are 3·P²
  ExtractionMode mode = ExtractionMode::pooling;
  std::uint64_t seed = 42;

  int patches() const { return grid_h * grid_w; }
  int input_dim() const { return 3 * patch_size * patch_size; }
  int pixel_h() const { return grid_h * patch_size; }
  int pixel_w() const { return grid_w * patch_size; }

  /// Throws Error naming the first violated constraint.
  void validate() const;
  ModelGeometry geometry() const;
};

struct AttentionWeights {
  Matrix query, key, value, output;  // each D×D, applied as x·W
};

struct ToyModelWeights {
  ToyModelConfig config;
  Matrix patch_projection;  // input_dim × D
  std::vector<AttentionWeights> temporal;  // one per block
  std::vector<AttentionWeights> spatial;   // one per block
  Matrix summary_token;     // 1×D: pooling probe or CLS embedding
  AttentionWeights pooling;  // pooling mode only
  std::vector<AttentionWeights> head;      // one per head block
  Matrix classifier;        // D × num_classes

  /// Named tensors in generation order (the order init_weights draws them).
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
};

/// Draws every parameter, in tensors() order and row-major within a tensor,
/// from SplitMix64(seed) as uniform(-1/√D, 1/√D).
ToyModelWeights init_weights(const ToyModelConfig& config, std::uint64_t seed);

/// Weight container: weights_manifest.json plus one little-endian float64
/// file per tensor.
void save_weights(const ToyModelWeights& weights, const fs::path& dir);
ToyModelWeights load_weights(const fs::path& dir);

/// Patch features of one clip: T matrices of N × input_dim.
using ClipTokens = std::vector<Matrix>;

/// Attention (or gradient) tensors in trace layout, forward order.
struct CapturedTensor {
  std::string record_id;
  RecordKind kind = RecordKind::spatial;
  int layer_index = 0;
  Shape shape;
  std::vector<double> data;
};
using AttentionSet = std::vector<CapturedTensor>;

/// record_id -> replacement tensor (trace layout). Records not present are
/// computed by softmax as usual.
using AttentionOverrides = std::map<std::string, std::vector<double>>;

struct ForwardResult {
  Vector logits;
  AttentionSet attentions;
  Matrix frame_embeddings;  // T×D, input to the classifier-head blocks
  Matrix head_output;       // T×D, after the classifier-head blocks
};

struct BackwardResult {
  ForwardResult forward;
  AttentionSet attention_grads;  // ∂f/∂A, parallel to forward.attentions
  ClipTokens input_grad;         // ∂f/∂tokens
};

class ModelError : public Error {
 public:
  using Error::Error;
};

ForwardResult forward(const ToyModelWeights& weights, const ClipTokens& tokens);

/// forward() with selected softmax outputs replaced.
ForwardResult forward_from_attention(const ToyModelWeights& weights, const ClipTokens& tokens,
                                     const AttentionOverrides& overrides);

/// Exact gradients of logit[target_class] w.r.t. every attention tensor (total
/// derivative, downstream softmaxes included) and the input tokens.
BackwardResult backward(const ToyModelWeights& weights, const ClipTokens& tokens, int target_class);

/// forward + backward packaged as a trace (float32 storage).
AttentionTrace emit_trace(const ToyModelWeights& weights, const ClipTokens& tokens, int target_class,
                          const std::string& clip_id);

}  // namespace groundlens
