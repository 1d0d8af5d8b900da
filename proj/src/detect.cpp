#include "yffn/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

Corners to_corners(const BBox& b) {
  auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {clip(b.cx - b.w / 2.0), clip(b.cy - b.h / 2.0), clip(b.cx + b.w / 2.0),
          clip(b.cy + b.h / 2.0)};
}

double iou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double area_a = (ca.x2 - ca.x1) * (ca.y2 - ca.y1);
  const double area_b = (cb.x2 - cb.x1) * (cb.y2 - cb.y1);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double ix = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double iy = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (area_a + area_b - inter);
}

bool containment(const BBox& inner, const BBox& outer) {
  const Corners ci = to_corners(inner), co = to_corners(outer);
  return ci.x1 >= co.x1 && ci.y1 >= co.y1 && ci.x2 <= co.x2 && ci.y2 <= co.y2;
}

Anchors default_anchors(const NetworkConfig& cfg) {
  Anchors a;
  for (int s = 0; s < 3; ++s) {
    const double stride = NetworkConfig::strides[s];
    for (int i = 0; i < cfg.anchors_per_scale; ++i) {
      const double size = stride * std::pow(2.0, i);
      a.per_scale[s].push_back({size, size});
    }
  }
  return a;
}

std::vector<Detection> decode_head(const HeadOutput& head, const NetworkConfig& cfg,
                                   const Anchors& anchors) {
  const std::array<const Tensor*, 3> scales{&head.s8, &head.s16, &head.s32};
  const int a_count = cfg.anchors_per_scale;
  const int k = cfg.class_count;
  const int per_anchor = 5 + k;
  const double s_img = cfg.input_size;

  std::vector<Detection> out;
  for (int si = 0; si < 3; ++si) {
    const Tensor& t = *scales[si];
    const int stride = NetworkConfig::strides[si];
    const int grid = cfg.grid(stride);
    if (t.rank() != 3 || t.extent(0) != grid || t.extent(1) != grid ||
        t.extent(2) != cfg.head_channels()) {
      throw std::invalid_argument(detail::cat("decode_head: scale ", stride, " expects (", grid,
                                              ", ", grid, ", ", cfg.head_channels(), "), got ",
                                              t.shape_str()));
    }
    if (static_cast<int>(anchors.per_scale[si].size()) != a_count) {
      throw std::invalid_argument(detail::cat("decode_head: scale ", stride, " needs ", a_count,
                                              " anchors, got ", anchors.per_scale[si].size()));
    }
    for (int gx = 0; gx < grid; ++gx) {
      for (int gy = 0; gy < grid; ++gy) {
        for (int a = 0; a < a_count; ++a) {
          const int base = a * per_anchor;
          const double tx = t.at(gx, gy, base + 0);
          const double ty = t.at(gx, gy, base + 1);
          const double tw = t.at(gx, gy, base + 2);
          const double th = t.at(gx, gy, base + 3);
          const double obj = t.at(gx, gy, base + 4);

          double best_cls = -1.0;
          int best_id = 0;
          for (int c = 0; c < k; ++c) {
            const double p = sigmoid(t.at(gx, gy, base + 5 + c));
            if (p > best_cls) {
              best_cls = p;
              best_id = c;
            }
          }

          Detection d;
          d.bbox.cx = std::clamp((sigmoid(tx) * 2.0 - 0.5 + gx) * stride / s_img, 0.0, 1.0);
          d.bbox.cy = std::clamp((sigmoid(ty) * 2.0 - 0.5 + gy) * stride / s_img, 0.0, 1.0);
          const double sw = sigmoid(tw) * 2.0, sh = sigmoid(th) * 2.0;
          d.bbox.w = std::min(sw * sw * anchors.per_scale[si][a][0] / s_img, 1.0);
          d.bbox.h = std::min(sh * sh * anchors.per_scale[si][a][1] / s_img, 1.0);
          d.confidence = sigmoid(obj) * best_cls;
          d.class_id = best_id;
          out.push_back(d);
        }
      }
    }
  }
  return out;
}

std::vector<Detection> confidence_filter(const std::vector<Detection>& dets, double threshold) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    if (d.confidence >= threshold) out.push_back(d);
  }
  return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<bool> suppressed(dets.size(), false);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t keep = order[i];
    if (suppressed[keep]) continue;
    out.push_back(dets[keep]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t cand = order[j];
      if (suppressed[cand] || dets[cand].class_id != dets[keep].class_id) continue;
      if (iou(dets[keep].bbox, dets[cand].bbox) > iou_threshold) suppressed[cand] = true;
    }
  }
  return out;
}

}  // namespace yffn
