#pragma once

#include <map>
#include <string>
#include <vector>

#include "yffn/detect.hpp"

namespace yffn {

struct MatchingConfig {
  double iou_threshold = 0.5;
  double confidence_threshold = 0.25;
};

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0;
};

/// Per-detection outcome from greedy matching; gt_index is -1 for FPs.
struct DetectionMatch {
  double confidence = 0.0;
  int class_id = 0;
  bool is_tp = false;
  int gt_index = -1;
};

struct MatchResult {
  ConfusionCounts counts;
  std::vector<DetectionMatch> flags;  // one per input detection, input order
};

/// Greedy one-to-one matching in descending confidence (ties keep input
/// order). A detection is a TP iff its highest-IoU unmatched ground-truth box
/// of the same class reaches cfg.iou_threshold. Detections are expected to be
/// pre-filtered by confidence; only the IoU threshold is applied here.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<Annotation>& gts, const MatchingConfig& cfg);

/// fn / (fn + tp); 0 when the denominator is 0.
double fnr(const ConfusionCounts& c);
/// fp / (fp + tp); 0 when the denominator is 0.
double fdr(const ConfusionCounts& c);

/// All-point interpolated area under the precision-recall curve. Flags may
/// come from several images; they are sorted by descending confidence here.
/// gt_count == 0 yields 1 with no detections present, otherwise 0.
double average_precision(std::vector<DetectionMatch> flags, long gt_count);

/// Unweighted mean; rejects an empty class set.
double mean_ap(const std::vector<double>& per_class_ap);

/// Fraction of TP detections whose box lies entirely inside its matched
/// ground-truth box; 0 when nothing matched.
double containment_rate(const std::vector<Detection>& dets, const std::vector<Annotation>& gts,
                        const std::vector<DetectionMatch>& flags);

struct ImageSample {
  std::vector<Detection> detections;
  std::vector<Annotation> annotations;
};

using Dataset = std::map<std::string, ImageSample>;

struct EvalReport {
  std::map<double, double> map_at;  // IoU threshold -> mAP
  double fnr = 0.0;
  double fdr = 0.0;
  double containment_rate = 0.0;
  ConfusionCounts counts;
};

/// mAP per requested IoU threshold (PR sweep over all detections), plus
/// FNR/FDR/containment and confusion counts at the operating point.
EvalReport evaluate(const Dataset& data, const std::vector<double>& iou_thresholds,
                    const MatchingConfig& operating_point);

/// Pairs per-image detections with annotations by key; a key present on one
/// side only is an error naming the key.
Dataset merge_keyed(const std::map<std::string, std::vector<Detection>>& dets,
                    const std::map<std::string, std::vector<Annotation>>& gts);

}  // namespace yffn
