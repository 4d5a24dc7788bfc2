// SPDX-License-Identifier: Apache-2.0
#include "groundlens/metrics.hpp"

#include <algorithm>
#include <map>

namespace groundlens {

namespace {

void check_shape(std::span<const double> relevance, const Mask& mask, const char* who) {
  if (relevance.size() != mask.bits.size()) throw Error(std::string(who) + ": relevance/mask shape mismatch");
}

double max_value(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

std::size_t intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out.size();
}

struct Accumulator {
  double energy = 0.0, pointing = 0.0, s_iou = 0.0, t_iou = 0.0;
  std::size_t frames = 0, clips = 0;

  MetricSummary mean() const {
    MetricSummary s;
    s.frames = frames;
    s.clips = clips;
    if (frames > 0) {
      s.energy = energy / static_cast<double>(frames);
      s.pointing = pointing / static_cast<double>(frames);
      s.s_iou = s_iou / static_cast<double>(frames);
    }
    if (clips > 0) s.t_iou = t_iou / static_cast<double>(clips);
    return s;
  }
};

}  // namespace

double energy(std::span<const double> relevance, const Mask& mask) {
  check_shape(relevance, mask, "energy");
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    total += relevance[k];
    if (mask.bits[k]) inside += relevance[k];
  }
  return total > 0.0 ? inside / total : 0.0;
}

int pointing(std::span<const double> relevance, const Mask& mask) {
  check_shape(relevance, mask, "pointing");
  if (relevance.empty()) return 0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < relevance.size(); ++k)
    if (relevance[k] > relevance[best]) best = k;
  if (!(relevance[best] > 0.0)) return 0;
  return mask.bits[best] ? 1 : 0;
}

double s_iou(std::span<const double> relevance, const Mask& mask) {
  check_shape(relevance, mask, "s_iou");
  const double peak = max_value(relevance);
  const double threshold = 0.5 * peak;
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    const bool predicted = peak > 0.0 && relevance[k] >= threshold;
    const bool truth = mask.bits[k] != 0;
    inter += (predicted && truth) ? 1 : 0;
    uni += (predicted || truth) ? 1 : 0;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

TemporalSets temporal_sets(const RelevanceVolume& volume, const ClipAnnotation& annotation, TierSet tiers) {
  TemporalSets sets;
  std::vector<double> means(static_cast<std::size_t>(volume.frames));
  double best = 0.0;
  for (int t = 0; t < volume.frames; ++t) {
    const auto frame = volume.frame(t);
    double sum = 0.0;
    for (double v : frame) sum += v;
    means[t] = frame.empty() ? 0.0 : sum / static_cast<double>(frame.size());
    best = std::max(best, means[t]);
    if (annotation.has_cues(t, tiers)) sets.ground_truth.push_back(t);
  }
  if (best > 0.0)
    for (int t = 0; t < volume.frames; ++t)
      if (means[t] >= 0.5 * best) sets.predicted.push_back(t);
  return sets;
}

double t_iou(const RelevanceVolume& volume, const ClipAnnotation& annotation, TierSet tiers) {
  const TemporalSets s = temporal_sets(volume, annotation, tiers);
  const std::size_t inter = intersection_size(s.ground_truth, s.predicted);
  const std::size_t uni = s.ground_truth.size() + s.predicted.size() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

int predicted_class(std::span<const double> logits) {
  if (logits.empty()) return -1;
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double accuracy(std::span<const AttentionTrace> traces, std::span<const ClipAnnotation> annotations,
                const std::vector<std::string>& vocabulary) {
  if (traces.size() != annotations.size()) throw Error("accuracy: traces and annotations differ in length");
  if (traces.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].logits.size() != vocabulary.size())
      throw Error("accuracy: clip '" + traces[i].clip_id + "' has " + std::to_string(traces[i].logits.size()) +
                  " logits for a vocabulary of " + std::to_string(vocabulary.size()));
    const int p = predicted_class(traces[i].logits);
    if (vocabulary[p] == annotations[i].event_class) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(traces.size());
}

ClipEvaluation evaluate_clip(const RelevanceVolume& volume, const ClipAnnotation& annotation,
                             std::span<const double> logits, const std::vector<std::string>& vocabulary,
                             std::span<const TierSet> tiers) {
  if (volume.clip_id != annotation.clip_id)
    throw Error("clip_id mismatch: volume '" + volume.clip_id + "' vs annotation '" + annotation.clip_id + "'");
  if (logits.size() != vocabulary.size())
    throw Error("clip '" + volume.clip_id + "': logit count does not match the class vocabulary");
  for (const auto& [t, boxes] : annotation.frames)
    if (t >= volume.frames) throw Error("clip '" + volume.clip_id + "': annotated frame beyond the volume");

  const auto truth = std::find(vocabulary.begin(), vocabulary.end(), annotation.event_class);
  const int true_class = truth == vocabulary.end() ? -1 : static_cast<int>(truth - vocabulary.begin());
  const int guess = predicted_class(logits);

  ClipEvaluation out;
  for (TierSet tiers_k : tiers) {
    for (int t = 0; t < volume.frames; ++t) {
      if (!annotation.has_cues(t, tiers_k)) continue;
      const Mask mask = rasterize(annotation.boxes(t), tiers_k, volume.pixel_H, volume.pixel_W);
      const auto frame = volume.frame(t);
      out.frames.push_back(FrameMetrics{annotation.clip_id, t, tiers_k, energy(frame, mask), pointing(frame, mask),
                                        s_iou(frame, mask), true});
    }
    TemporalSets sets = temporal_sets(volume, annotation, tiers_k);
    ClipMetrics c;
    c.clip_id = annotation.clip_id;
    c.tiers = tiers_k;
    c.t_iou = t_iou(volume, annotation, tiers_k);
    c.t_gt = std::move(sets.ground_truth);
    c.t_pred = std::move(sets.predicted);
    c.predicted_class = guess;
    c.true_class = true_class;
    c.correct = guess == true_class;
    out.clips.push_back(std::move(c));
  }
  return out;
}

GroundingReport aggregate(std::span<const FrameMetrics> frame_metrics, std::span<const ClipMetrics> clip_metrics,
                          const DatasetManifest& manifest, std::span<const TierSet> tiers, std::string method) {
  if (clip_metrics.empty() || tiers.empty()) throw Error("aggregate: no clips to aggregate");

  const std::size_t n_tiers = tiers.size();
  auto tier_slot = [&](TierSet s) -> std::size_t {
    for (std::size_t k = 0; k < n_tiers; ++k)
      if (tiers[k] == s) return k;
    throw Error("aggregate: metric for an unrequested tier set " + s.label());
  };

  std::map<std::string, int> class_of;
  for (const auto& c : clip_metrics) {
    if (c.true_class < 0 || c.true_class >= static_cast<int>(manifest.classes.size()))
      throw Error("aggregate: clip '" + c.clip_id + "' has no class in the vocabulary");
    class_of[c.clip_id] = c.true_class;
  }

  const std::size_t n_classes = manifest.classes.size();
  std::vector<std::vector<Accumulator>> per_class(n_classes, std::vector<Accumulator>(n_tiers));
  std::vector<Accumulator> micro(n_tiers);
  std::vector<std::size_t> class_clips(n_classes, 0), class_correct(n_classes, 0);

  for (const auto& f : frame_metrics) {
    if (!f.valid) continue;
    const auto it = class_of.find(f.clip_id);
    if (it == class_of.end()) throw Error("aggregate: frame metric for unknown clip '" + f.clip_id + "'");
    const std::size_t k = tier_slot(f.tiers);
    for (Accumulator* acc : {&per_class[it->second][k], &micro[k]}) {
      acc->energy += f.energy;
      acc->pointing += f.pointing;
      acc->s_iou += f.s_iou;
      ++acc->frames;
    }
  }
  for (const auto& c : clip_metrics) {
    const std::size_t k = tier_slot(c.tiers);
    for (Accumulator* acc : {&per_class[c.true_class][k], &micro[k]}) {
      acc->t_iou += c.t_iou;
      ++acc->clips;
    }
    if (k == 0) {
      ++class_clips[c.true_class];
      if (c.correct) ++class_correct[c.true_class];
    }
  }

  GroundingReport r;
  r.method = std::move(method);
  r.tiers.assign(tiers.begin(), tiers.end());
  std::size_t total_clips = 0, total_correct = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (class_clips[c] == 0) continue;
    ClassSummary s;
    s.name = manifest.classes[c];
    s.clips = class_clips[c];
    s.accuracy = static_cast<double>(class_correct[c]) / static_cast<double>(class_clips[c]);
    for (const auto& acc : per_class[c]) s.by_tier.push_back(acc.mean());
    r.per_class.push_back(std::move(s));
    total_clips += class_clips[c];
    total_correct += class_correct[c];
  }
  r.clips = total_clips;
  r.accuracy = total_clips > 0 ? static_cast<double>(total_correct) / static_cast<double>(total_clips) : 0.0;

  for (std::size_t k = 0; k < n_tiers; ++k) {
    r.micro.push_back(micro[k].mean());
    Accumulator macro;
    std::size_t frame_classes = 0, clip_classes = 0;
    for (const auto& s : r.per_class) {
      const MetricSummary& m = s.by_tier[k];
      if (m.frames > 0) {
        macro.energy += m.energy;
        macro.pointing += m.pointing;
        macro.s_iou += m.s_iou;
        ++frame_classes;
      }
      if (m.clips > 0) {
        macro.t_iou += m.t_iou;
        ++clip_classes;
      }
    }
    MetricSummary m;
    m.frames = micro[k].frames;
    m.clips = micro[k].clips;
    if (frame_classes > 0) {
      m.energy = macro.energy / static_cast<double>(frame_classes);
      m.pointing = macro.pointing / static_cast<double>(frame_classes);
      m.s_iou = macro.s_iou / static_cast<double>(frame_classes);
    }
    if (clip_classes > 0) m.t_iou = macro.t_iou / static_cast<double>(clip_classes);
    r.macro.push_back(m);
  }
  return r;
}

}  // namespace groundlens
