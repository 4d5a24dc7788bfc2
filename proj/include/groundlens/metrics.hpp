// SPDX-License-Identifier: Apache-2.0
//
// Grounding metrics: Energy, Pointing, S-IoU (per frame), T-IoU (per clip),
// top-1 accuracy, and their per-class / macro / micro aggregation.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundlens/annotations.hpp"
#include "groundlens/relevance.hpp"

namespace groundlens {

/// Fraction of relevance mass inside the mask, Σ E·B / Σ E; 0 when Σ E = 0.
double energy(std::span<const double> relevance, const Mask& mask);

/// 1 when the first (row-major) maximum pixel lies inside the mask; 0 for an
/// all-zero frame.
int pointing(std::span<const double> relevance, const Mask& mask);

/// IoU between {pixels >= 0.5·frame max} and the mask; an all-zero frame
/// predicts no pixels.
double s_iou(std::span<const double> relevance, const Mask& mask);

struct TemporalSets {
  std::vector<int> ground_truth;  // frames with >= 1 box in the tier set
  std::vector<int> predicted;     // frames with mean >= 0.5·max mean
};

TemporalSets temporal_sets(const RelevanceVolume& volume, const ClipAnnotation& annotation, TierSet tiers);

/// |T_gt ∩ T_pred| / |T_gt ∪ T_pred|; 0 when the union is empty.
double t_iou(const RelevanceVolume& volume, const ClipAnnotation& annotation, TierSet tiers);

/// argmax with ties to the lowest index.
int predicted_class(std::span<const double> logits);

/// Fraction of clips whose argmax logit names the annotated class.
double accuracy(std::span<const AttentionTrace> traces, std::span<const ClipAnnotation> annotations,
                const std::vector<std::string>& vocabulary);

struct FrameMetrics {
  std::string clip_id;
  int frame = 0;
  TierSet tiers;
  double energy = 0.0;
  int pointing = 0;
  double s_iou = 0.0;
  bool valid = false;  // frame has >= 1 box in the tier set
};

struct ClipMetrics {
  std::string clip_id;
  TierSet tiers;
  double t_iou = 0.0;
  std::vector<int> t_gt;
  std::vector<int> t_pred;
  int predicted_class = -1;
  int true_class = -1;
  bool correct = false;
};

struct ClipEvaluation {
  std::vector<FrameMetrics> frames;  // valid frames only, tier-set major
  std::vector<ClipMetrics> clips;    // one per tier set
};

/// Every metric for one clip across the given tier sets. Masks are rasterized
/// at the volume's pixel resolution.
ClipEvaluation evaluate_clip(const RelevanceVolume& volume, const ClipAnnotation& annotation,
                             std::span<const double> logits, const std::vector<std::string>& vocabulary,
                             std::span<const TierSet> tiers);

struct MetricSummary {
  double energy = 0.0;
  double pointing = 0.0;
  double s_iou = 0.0;
  double t_iou = 0.0;
  std::size_t frames = 0;  // valid frames contributing to energy/pointing/s_iou
  std::size_t clips = 0;   // clips contributing to t_iou
};

struct ClassSummary {
  std::string name;
  std::vector<MetricSummary> by_tier;  // parallel to GroundingReport::tiers
  double accuracy = 0.0;
  std::size_t clips = 0;
};

/// All values are fractions in [0, 1]; rendering converts to percentages.
struct GroundingReport {
  std::string method;
  std::vector<TierSet> tiers;
  std::vector<ClassSummary> per_class;  // classes with >= 1 clip, vocabulary order
  std::vector<MetricSummary> macro;     // mean over classes
  std::vector<MetricSummary> micro;     // mean over frames / clips
  double accuracy = 0.0;
  std::size_t clips = 0;
};

/// Folds per-frame and per-clip metrics into a report. Frame metrics are
/// averaged within class then across classes (macro) and directly over all
/// frames (micro); classes lacking valid frames for a tier set do not enter
/// that tier set's macro mean. Throws Error on empty input.
GroundingReport aggregate(std::span<const FrameMetrics> frame_metrics, std::span<const ClipMetrics> clip_metrics,
                          const DatasetManifest& manifest, std::span<const TierSet> tiers, std::string method);

}  // namespace groundlens
