#pragma once

#include <string>
#include <vector>

#include "yffn/metrics.hpp"

namespace yffn {

struct FrameRecord {
  bool gt_present = false;
  bool detected = false;
};

struct FrameDetectionSeq {
  std::vector<FrameRecord> frames;
  std::string source_id;
};

enum class WindowPolicy { Sliding, Disjoint };

struct WindowFnr {
  double value = 0.0;
  long positive_windows = 0;  // windows with ground truth in every frame
  long missed_windows = 0;
  bool undefined = false;  // no positive window existed; value reported as 0
};

/// A window counts toward the denominator only if every frame in it has
/// ground truth; it is detected iff at least one of its frames is detected.
/// Sliding enumerates all stride-1 windows; Disjoint tiles from the start and
/// drops a trailing remainder shorter than `size`.
WindowFnr window_fnr(const FrameDetectionSeq& seq, int size, WindowPolicy policy);

struct AlarmCurve {
  std::vector<std::pair<int, double>> points;  // (window size, fnr)
};

/// The window sizes reported per camera position.
std::vector<int> default_window_sizes();  // {1, 5, 11, 17, 21, 27}

AlarmCurve alarm_curve(const FrameDetectionSeq& seq, const std::vector<int>& sizes,
                       WindowPolicy policy);

struct FrameEval {
  long frame_index = 0;
  std::vector<Detection> detections;
  std::vector<Annotation> annotations;
};

/// Builds the per-frame hit/miss record: a frame is detected iff it has at
/// least one TP under the matching config (after confidence filtering);
/// gt_present mirrors annotation presence. Frame indices must be strictly
/// increasing.
FrameDetectionSeq sequence_from_eval(const std::vector<FrameEval>& frames,
                                     const MatchingConfig& cfg);

/// One frame per line: "frame_index gt_flag det_flag" with 0/1 flags.
FrameDetectionSeq parse_sequence(const std::string& text);
std::string format_sequence(const FrameDetectionSeq& seq);

/// One point per line: "size fnr".
std::string format_curve(const AlarmCurve& curve);

}  // namespace yffn
