#include "yffn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<Annotation>& gts, const MatchingConfig& cfg) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  MatchResult res;
  res.flags.resize(dets.size());
  std::vector<bool> taken(gts.size(), false);

  for (std::size_t idx : order) {
    const Detection& d = dets[idx];
    DetectionMatch flag;
    flag.confidence = d.confidence;
    flag.class_id = d.class_id;

    double best = -1.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != d.class_id) continue;
      const double overlap = iou(d.bbox, gts[g].bbox);
      if (overlap > best) {
        best = overlap;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= cfg.iou_threshold) {
      flag.is_tp = true;
      flag.gt_index = best_gt;
      taken[best_gt] = true;
      ++res.counts.tp;
    } else {
      ++res.counts.fp;
    }
    res.flags[idx] = flag;
  }
  for (bool t : taken) {
    if (!t) ++res.counts.fn;
  }
  return res;
}

double fnr(const ConfusionCounts& c) {
  const long denom = c.fn + c.tp;
  return denom == 0 ? 0.0 : static_cast<double>(c.fn) / static_cast<double>(denom);
}

double fdr(const ConfusionCounts& c) {
  const long denom = c.fp + c.tp;
  return denom == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(denom);
}

double average_precision(std::vector<DetectionMatch> flags, long gt_count) {
  if (gt_count <= 0) return flags.empty() ? 1.0 : 0.0;
  std::stable_sort(flags.begin(), flags.end(),
                   [](const DetectionMatch& a, const DetectionMatch& b) {
                     return a.confidence > b.confidence;
                   });

  std::vector<double> precision, recall;
  long tp = 0, fp = 0;
  for (const DetectionMatch& f : flags) {
    if (f.is_tp) {
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
  }

  // monotone non-increasing precision envelope, then exact rectangle sum
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double mean_ap(const std::vector<double>& per_class_ap) {
  if (per_class_ap.empty()) {
    throw std::invalid_argument("mean_ap requires at least one class");
  }
  double acc = 0.0;
  for (double ap : per_class_ap) acc += ap;
  return acc / static_cast<double>(per_class_ap.size());
}

double containment_rate(const std::vector<Detection>& dets, const std::vector<Annotation>& gts,
                        const std::vector<DetectionMatch>& flags) {
  long matched = 0, contained = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i].is_tp) continue;
    ++matched;
    if (containment(dets[i].bbox, gts[flags[i].gt_index].bbox)) ++contained;
  }
  return matched == 0 ? 0.0 : static_cast<double>(contained) / static_cast<double>(matched);
}

EvalReport evaluate(const Dataset& data, const std::vector<double>& iou_thresholds,
                    const MatchingConfig& operating_point) {
  EvalReport report;

  std::set<int> classes;
  for (const auto& [key, sample] : data) {
    for (const Annotation& a : sample.annotations) classes.insert(a.class_id);
    for (const Detection& d : sample.detections) classes.insert(d.class_id);
  }

  // PR sweep per IoU threshold over every detection (confidence threshold 0)
  for (double threshold : iou_thresholds) {
    MatchingConfig sweep{threshold, 0.0};
    std::map<int, std::vector<DetectionMatch>> flags_per_class;
    std::map<int, long> gt_per_class;
    for (int c : classes) {
      flags_per_class[c];
      gt_per_class[c] = 0;
    }
    for (const auto& [key, sample] : data) {
      const MatchResult m = match_detections(sample.detections, sample.annotations, sweep);
      for (const DetectionMatch& f : m.flags) flags_per_class[f.class_id].push_back(f);
      for (const Annotation& a : sample.annotations) ++gt_per_class[a.class_id];
    }
    std::vector<double> per_class;
    for (int c : classes) {
      per_class.push_back(average_precision(flags_per_class[c], gt_per_class[c]));
    }
    report.map_at[threshold] = per_class.empty() ? 0.0 : mean_ap(per_class);
  }

  // operating-point counts and containment
  long matched = 0, contained_total = 0;
  for (const auto& [key, sample] : data) {
    const std::vector<Detection> kept =
        confidence_filter(sample.detections, operating_point.confidence_threshold);
    const MatchResult m = match_detections(kept, sample.annotations, operating_point);
    report.counts.tp += m.counts.tp;
    report.counts.fp += m.counts.fp;
    report.counts.fn += m.counts.fn;
    for (std::size_t i = 0; i < m.flags.size(); ++i) {
      if (!m.flags[i].is_tp) continue;
      ++matched;
      if (containment(kept[i].bbox, sample.annotations[m.flags[i].gt_index].bbox)) {
        ++contained_total;
      }
    }
  }
  report.fnr = fnr(report.counts);
  report.fdr = fdr(report.counts);
  report.containment_rate =
      matched == 0 ? 0.0 : static_cast<double>(contained_total) / static_cast<double>(matched);
  return report;
}

Dataset merge_keyed(const std::map<std::string, std::vector<Detection>>& dets,
                    const std::map<std::string, std::vector<Annotation>>& gts) {
  Dataset data;
  for (const auto& [key, anns] : gts) {
    if (dets.find(key) == dets.end()) {
      throw std::invalid_argument(detail::cat("missing detections for image key '", key, "'"));
    }
    data[key] = {dets.at(key), anns};
  }
  for (const auto& [key, d] : dets) {
    if (gts.find(key) == gts.end()) {
      throw std::invalid_argument(detail::cat("missing annotations for image key '", key, "'"));
    }
  }
  return data;
}

}  // namespace yffn
