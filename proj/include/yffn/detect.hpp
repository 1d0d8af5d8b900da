#pragma once

#include <array>
#include <vector>

#include "yffn/network.hpp"
#include "yffn/tensor.hpp"

namespace yffn {

/// Axis-aligned box in normalized center format, relative to image extent.
struct BBox {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

/// Corner rectangle clipped to the unit square.
struct Corners {
  double x1, y1, x2, y2;
};

/// Center box to corners, clamped to [0, 1].
Corners to_corners(const BBox& b);

/// Intersection over union on the clipped corner rectangles. Zero-area boxes
/// yield 0 against anything, including themselves.
double iou(const BBox& a, const BBox& b);

/// True iff every corner of `inner` lies inside `outer` (closed comparison).
bool containment(const BBox& inner, const BBox& outer);

struct Detection {
  BBox bbox;
  double confidence = 0.0;
  int class_id = 0;
};

struct Annotation {
  BBox bbox;
  int class_id = 0;
};

/// Anchor (w, h) pairs in input pixels, one list per pyramid scale.
struct Anchors {
  std::array<std::vector<std::array<double, 2>>, 3> per_scale;
};

/// Anchor set with per-scale sizes stride * 2^i for anchor index i.
Anchors default_anchors(const NetworkConfig& cfg);

/// Standard anchor-grid decoding of the raw head tensors:
///   cx = (sigmoid(tx)*2 - 0.5 + grid_x) * stride / S
///   w  = (sigmoid(tw)*2)^2 * anchor_w / S
///   confidence = sigmoid(objectness) * max_class_sigmoid
/// Boxes are clamped to the unit square. Output order is scale-major
/// (8, 16, 32), then cell x, cell y, anchor.
std::vector<Detection> decode_head(const HeadOutput& head, const NetworkConfig& cfg,
                                   const Anchors& anchors);

/// Keeps detections with confidence >= threshold, order preserved.
std::vector<Detection> confidence_filter(const std::vector<Detection>& dets, double threshold);

/// Greedy class-aware suppression by descending confidence (ties keep the
/// earlier index); surviving same-class pairs have IoU <= threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace yffn
