#include "yffn/alarm.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

WindowFnr window_fnr(const FrameDetectionSeq& seq, int size, WindowPolicy policy) {
  const long n = static_cast<long>(seq.frames.size());
  if (n == 0) throw std::invalid_argument("window_fnr: sequence is empty");
  if (size < 1 || size > n) {
    throw std::invalid_argument(detail::cat("window_fnr: size ", size,
                                            " invalid for sequence of length ", n));
  }

  WindowFnr out;
  const long step = policy == WindowPolicy::Sliding ? 1 : size;
  for (long start = 0; start + size <= n; start += step) {
    bool all_gt = true;
    bool any_hit = false;
    for (long i = start; i < start + size; ++i) {
      all_gt = all_gt && seq.frames[i].gt_present;
      any_hit = any_hit || seq.frames[i].detected;
    }
    if (!all_gt) continue;
    ++out.positive_windows;
    if (!any_hit) ++out.missed_windows;
  }
  if (out.positive_windows == 0) {
    out.undefined = true;
    out.value = 0.0;
  } else {
    out.value = static_cast<double>(out.missed_windows) /
                static_cast<double>(out.positive_windows);
  }
  return out;
}

std::vector<int> default_window_sizes() { return {1, 5, 11, 17, 21, 27}; }

AlarmCurve alarm_curve(const FrameDetectionSeq& seq, const std::vector<int>& sizes,
                       WindowPolicy policy) {
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) {
      throw std::invalid_argument("alarm_curve: window sizes must be strictly increasing");
    }
  }
  AlarmCurve curve;
  for (int size : sizes) {
    curve.points.emplace_back(size, window_fnr(seq, size, policy).value);
  }
  return curve;
}

FrameDetectionSeq sequence_from_eval(const std::vector<FrameEval>& frames,
                                     const MatchingConfig& cfg) {
  FrameDetectionSeq seq;
  long prev_index = 0;
  bool first = true;
  for (const FrameEval& frame : frames) {
    if (!first && frame.frame_index <= prev_index) {
      throw std::invalid_argument(detail::cat("sequence_from_eval: frame index ",
                                              frame.frame_index,
                                              " not strictly increasing after ", prev_index));
    }
    first = false;
    prev_index = frame.frame_index;

    FrameRecord rec;
    rec.gt_present = !frame.annotations.empty();
    const std::vector<Detection> kept =
        confidence_filter(frame.detections, cfg.confidence_threshold);
    rec.detected = match_detections(kept, frame.annotations, cfg).counts.tp > 0;
    seq.frames.push_back(rec);
  }
  return seq;
}

FrameDetectionSeq parse_sequence(const std::string& text) {
  FrameDetectionSeq seq;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  long prev_index = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    long index;
    int gt_flag, det_flag;
    if (!(row >> index >> gt_flag >> det_flag) || (gt_flag != 0 && gt_flag != 1) ||
        (det_flag != 0 && det_flag != 1)) {
      throw std::invalid_argument(detail::cat("sequence line ", line_no,
                                              ": expected 'frame_index gt_flag det_flag'"));
    }
    if (!first && index <= prev_index) {
      throw std::invalid_argument(detail::cat("sequence line ", line_no,
                                              ": frame index not strictly increasing"));
    }
    first = false;
    prev_index = index;
    seq.frames.push_back({gt_flag == 1, det_flag == 1});
  }
  if (seq.frames.empty()) throw std::invalid_argument("sequence file contains no frames");
  return seq;
}

std::string format_sequence(const FrameDetectionSeq& seq) {
  std::ostringstream out;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    out << i << ' ' << (seq.frames[i].gt_present ? 1 : 0) << ' '
        << (seq.frames[i].detected ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string format_curve(const AlarmCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(12);
  for (const auto& [size, value] : curve.points) {
    out << size << ' ' << value << "\n";
  }
  return out.str();
}

}  // namespace yffn
