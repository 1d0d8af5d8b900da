#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "yffn/alarm.hpp"
#include "yffn/attention.hpp"
#include "yffn/bias.hpp"
#include "yffn/checkpoint.hpp"
#include "yffn/dataset.hpp"
#include "yffn/detect.hpp"
#include "yffn/metrics.hpp"
#include "yffn/network.hpp"
#include "yffn/tensor.hpp"

namespace py = pybind11;
using namespace yffn;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor from_array(const DoubleArray& arr) {
  std::vector<int> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<int>(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
  return arr;
}

PoolKind pool_kind(const std::string& kind) {
  if (kind == "max") return PoolKind::Max;
  if (kind == "avg") return PoolKind::Avg;
  throw std::invalid_argument("pool kind must be 'max' or 'avg'");
}

WindowPolicy window_policy(const std::string& policy) {
  if (policy == "sliding") return WindowPolicy::Sliding;
  if (policy == "disjoint") return WindowPolicy::Disjoint;
  throw std::invalid_argument("policy must be 'sliding' or 'disjoint'");
}

BiasConfig bias_config(const std::string& mode) {
  BiasConfig cfg;
  if (mode == "fixed") {
    cfg.mode = BiasMode::Fixed;
  } else if (mode == "variable") {
    cfg.mode = BiasMode::Variable;
  } else {
    throw std::invalid_argument("bias mode must be 'fixed' or 'variable'");
  }
  return cfg;
}

FrameDetectionSeq seq_from_pairs(const std::vector<std::pair<bool, bool>>& frames) {
  FrameDetectionSeq seq;
  for (const auto& [gt, det] : frames) seq.frames.push_back({gt, det});
  return seq;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dual-backbone fusion detector blocks and detection evaluation tooling";

  // ---- numeric core -------------------------------------------------------
  m.def(
      "conv2d",
      [](const DoubleArray& x, const DoubleArray& k, int stride, int padding,
         const DoubleArray& bias) {
        return to_array(conv2d(from_array(x), from_array(k), stride, padding, from_array(bias)));
      },
      py::arg("input"), py::arg("kernels"), py::arg("stride") = 1, py::arg("padding") = 0,
      py::arg("bias"));
  m.def("silu", [](const DoubleArray& x) { return to_array(silu(from_array(x))); });
  m.def("sigmoid", [](const DoubleArray& x) { return to_array(sigmoid(from_array(x))); });
  m.def(
      "pool2d",
      [](const DoubleArray& x, const std::string& kind, int k, int stride, int padding) {
        return to_array(pool2d(from_array(x), pool_kind(kind), k, stride, padding));
      },
      py::arg("input"), py::arg("kind"), py::arg("k"), py::arg("stride") = 1,
      py::arg("padding") = 0);
  m.def("global_pool", [](const DoubleArray& x, const std::string& kind) {
    return to_array(global_pool(from_array(x), pool_kind(kind)));
  });
  m.def("channel_pool", [](const DoubleArray& x, const std::string& kind) {
    return to_array(channel_pool(from_array(x), pool_kind(kind)));
  });
  m.def("upsample_nearest", [](const DoubleArray& x, int factor) {
    return to_array(upsample_nearest(from_array(x), factor));
  });
  m.def("concat_channels", [](const DoubleArray& a, const DoubleArray& b) {
    return to_array(concat_channels(from_array(a), from_array(b)));
  });
  m.def("broadcast_mul", [](const DoubleArray& map, const DoubleArray& feature) {
    return to_array(broadcast_mul(from_array(map), from_array(feature)));
  });

  // ---- attention ----------------------------------------------------------
  py::class_<ChannelAttentionParams>(m, "ChannelAttentionParams")
      .def_static("seeded", &ChannelAttentionParams::seeded, py::arg("channels"),
                  py::arg("reduction"), py::arg("seed"))
      .def_static("zeros", &ChannelAttentionParams::zeros, py::arg("channels"),
                  py::arg("reduction"))
      .def_property_readonly("channels", &ChannelAttentionParams::channels)
      .def_readonly("reduction", &ChannelAttentionParams::reduction);
  py::class_<SpatialAttentionParams>(m, "SpatialAttentionParams")
      .def_static("seeded", &SpatialAttentionParams::seeded, py::arg("seed"), py::arg("k") = 7)
      .def_static("zeros", &SpatialAttentionParams::zeros, py::arg("k") = 7);
  py::class_<CBAMParams>(m, "CBAMParams")
      .def_static("seeded", &CBAMParams::seeded, py::arg("channels"), py::arg("reduction"),
                  py::arg("seed"))
      .def_readonly("channel", &CBAMParams::channel)
      .def_readonly("spatial", &CBAMParams::spatial);

  m.def("channel_attention", [](const DoubleArray& f, const ChannelAttentionParams& p) {
    return to_array(channel_attention(from_array(f), p));
  });
  m.def("spatial_attention", [](const DoubleArray& f, const SpatialAttentionParams& p) {
    return to_array(spatial_attention(from_array(f), p));
  });
  m.def("cbam_forward", [](const DoubleArray& f, const CBAMParams& p) {
    return to_array(cbam_forward(from_array(f), p));
  });
  m.def("fused_concat_attention",
        [](const DoubleArray& f, const DoubleArray& seg, const ChannelAttentionParams& p) {
          return to_array(fused_concat_attention(from_array(f), from_array(seg), p));
        });

  // ---- network ------------------------------------------------------------
  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init([](int input_size, int base_channels, int anchors_per_scale, int class_count) {
             NetworkConfig cfg;
             cfg.input_size = input_size;
             cfg.base_channels = base_channels;
             cfg.anchors_per_scale = anchors_per_scale;
             cfg.class_count = class_count;
             cfg.validate();
             return cfg;
           }),
           py::arg("input_size") = 64, py::arg("base_channels") = 8,
           py::arg("anchors_per_scale") = 3, py::arg("class_count") = 1)
      .def_readonly("input_size", &NetworkConfig::input_size)
      .def_readonly("base_channels", &NetworkConfig::base_channels)
      .def_readonly("anchors_per_scale", &NetworkConfig::anchors_per_scale)
      .def_readonly("class_count", &NetworkConfig::class_count)
      .def_property_readonly("head_channels", &NetworkConfig::head_channels);

  py::class_<ModelParams>(m, "Model")
      .def_static("seeded", &ModelParams::seeded, py::arg("config"), py::arg("seed"))
      .def_readonly("config", &ModelParams::config)
      .def("save", [](const ModelParams& p, const std::string& path) { save_checkpoint(p, path); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); });

  m.def("full_forward", [](const DoubleArray& x, const ModelParams& params) {
    const HeadOutput out = full_forward(from_array(x), params);
    return py::make_tuple(to_array(out.s8), to_array(out.s16), to_array(out.s32));
  });
  m.def("seg_branch_forward", [](const DoubleArray& x, const ModelParams& params) {
    return to_array(seg_branch_forward(from_array(x), params.seg).map);
  });

  // ---- detections ---------------------------------------------------------
  py::class_<BBox>(m, "BBox")
      .def(py::init([](double cx, double cy, double w, double h) {
             return BBox{cx, cy, w, h};
           }),
           py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
      .def_readwrite("cx", &BBox::cx)
      .def_readwrite("cy", &BBox::cy)
      .def_readwrite("w", &BBox::w)
      .def_readwrite("h", &BBox::h)
      .def("__repr__", [](const BBox& b) {
        return "BBox(cx=" + std::to_string(b.cx) + ", cy=" + std::to_string(b.cy) +
               ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) + ")";
      });
  py::class_<Detection>(m, "Detection")
      .def(py::init([](const BBox& b, double confidence, int class_id) {
             return Detection{b, confidence, class_id};
           }),
           py::arg("bbox"), py::arg("confidence"), py::arg("class_id") = 0)
      .def_readwrite("bbox", &Detection::bbox)
      .def_readwrite("confidence", &Detection::confidence)
      .def_readwrite("class_id", &Detection::class_id);
  py::class_<Annotation>(m, "Annotation")
      .def(py::init([](const BBox& b, int class_id) {
             return Annotation{b, class_id};
           }),
           py::arg("bbox"), py::arg("class_id") = 0)
      .def_readwrite("bbox", &Annotation::bbox)
      .def_readwrite("class_id", &Annotation::class_id);

  m.def("iou", &iou);
  m.def("containment", &containment, py::arg("inner"), py::arg("outer"));
  m.def(
      "decode_head",
      [](const DoubleArray& s8, const DoubleArray& s16, const DoubleArray& s32,
         const NetworkConfig& cfg) {
        HeadOutput head{from_array(s8), from_array(s16), from_array(s32)};
        return decode_head(head, cfg, default_anchors(cfg));
      },
      py::arg("s8"), py::arg("s16"), py::arg("s32"), py::arg("config"));
  m.def("confidence_filter", &confidence_filter, py::arg("detections"), py::arg("threshold"));
  m.def("nms", &nms, py::arg("detections"), py::arg("iou_threshold") = 0.45);

  // ---- metrics ------------------------------------------------------------
  m.def(
      "evaluate",
      [](const std::map<std::string,
                        std::pair<std::vector<Detection>, std::vector<Annotation>>>& data,
         const std::vector<double>& iou_thresholds, double iou_threshold,
         double confidence_threshold) {
        Dataset ds;
        for (const auto& [key, sample] : data) ds[key] = {sample.first, sample.second};
        const EvalReport r =
            evaluate(ds, iou_thresholds, MatchingConfig{iou_threshold, confidence_threshold});
        py::dict out;
        py::dict map_at;
        for (const auto& [t, v] : r.map_at) map_at[py::float_(t)] = v;
        out["map_at"] = map_at;
        out["fnr"] = r.fnr;
        out["fdr"] = r.fdr;
        out["containment_rate"] = r.containment_rate;
        out["tp"] = r.counts.tp;
        out["fp"] = r.counts.fp;
        out["fn"] = r.counts.fn;
        return out;
      },
      py::arg("data"), py::arg("iou_thresholds") = std::vector<double>{0.25, 0.5},
      py::arg("iou_threshold") = 0.5, py::arg("confidence_threshold") = 0.25);

  // ---- bias compensation --------------------------------------------------
  py::class_<SizeCategory>(m, "SizeCategory")
      .def_readonly("name", &SizeCategory::name)
      .def_readonly("w_min", &SizeCategory::w_min)
      .def_readonly("w_max", &SizeCategory::w_max)
      .def_readonly("h_min", &SizeCategory::h_min)
      .def_readonly("h_max", &SizeCategory::h_max)
      .def_readonly("lambda_w", &SizeCategory::lambda_w)
      .def_readonly("lambda_h", &SizeCategory::lambda_h);
  m.def("default_categories", &default_categories);
  m.def(
      "categorize",
      [](const BBox& box) { return categorize(box, default_categories()); },
      py::return_value_policy::copy);
  m.def(
      "compensate",
      [](const BBox& box, const std::string& mode) { return compensate(box, bias_config(mode)); },
      py::arg("box"), py::arg("mode") = "fixed");
  m.def(
      "compensate_all",
      [](const std::vector<Detection>& dets, const std::string& mode) {
        return compensate_all(dets, bias_config(mode));
      },
      py::arg("detections"), py::arg("mode") = "fixed");

  // ---- alarm windows ------------------------------------------------------
  m.def(
      "window_fnr",
      [](const std::vector<std::pair<bool, bool>>& frames, int size, const std::string& policy) {
        return window_fnr(seq_from_pairs(frames), size, window_policy(policy)).value;
      },
      py::arg("frames"), py::arg("size"), py::arg("policy") = "sliding");
  m.def(
      "alarm_curve",
      [](const std::vector<std::pair<bool, bool>>& frames, const std::vector<int>& sizes,
         const std::string& policy) {
        const AlarmCurve curve =
            alarm_curve(seq_from_pairs(frames), sizes, window_policy(policy));
        return curve.points;
      },
      py::arg("frames"), py::arg("sizes") = default_window_sizes(),
      py::arg("policy") = "sliding");
  m.def("default_window_sizes", &default_window_sizes);

  // ---- dataset io ---------------------------------------------------------
  m.def("parse_labels", &parse_labels);
  m.def("write_labels", &write_labels);
  m.def("parse_predictions", &parse_predictions);
  m.def("write_predictions", &write_predictions);
  m.def(
      "square_crop",
      [](int image_width, int image_height, const std::vector<Annotation>& annotations,
         int output_size, std::uint64_t seed, double min_box_retention) {
        CropSpec spec;
        spec.output_size = output_size;
        spec.seed = seed;
        spec.min_box_retention = min_box_retention;
        const CropResult r = square_crop(image_width, image_height, annotations, spec);
        return py::make_tuple(py::make_tuple(r.window.x, r.window.y, r.window.size),
                              r.annotations);
      },
      py::arg("image_width"), py::arg("image_height"), py::arg("annotations"),
      py::arg("output_size"), py::arg("seed") = 0, py::arg("min_box_retention") = 0.8);
}
