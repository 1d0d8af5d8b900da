// Command-line front end: evaluation, bias compensation, alarm-window
// analysis, crop preparation, network forward runs and gradient self-checks.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "yffn/alarm.hpp"
#include "yffn/bias.hpp"
#include "yffn/checkpoint.hpp"
#include "yffn/common.hpp"
#include "yffn/dataset.hpp"
#include "yffn/detect.hpp"
#include "yffn/gradcheck.hpp"
#include "yffn/metrics.hpp"
#include "yffn/network.hpp"

namespace fs = std::filesystem;
using namespace yffn;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError(detail::cat("cannot open '", path.string(), "'"));
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError(detail::cat("cannot write '", path.string(), "'"));
  f << content;
}

// sorted .txt stems in a directory
std::map<std::string, fs::path> list_label_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw InputError(detail::cat("'", dir.string(), "' is not a directory"));
  }
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::setprecision(12);
  for (const auto& [threshold, value] : r.map_at) {
    out << "map@" << threshold << "=" << value << "\n";
  }
  out << "fnr=" << r.fnr << "\n";
  out << "fdr=" << r.fdr << "\n";
  out << "containment_rate=" << r.containment_rate << "\n";
  out << "tp=" << r.counts.tp << "\n";
  out << "fp=" << r.counts.fp << "\n";
  out << "fn=" << r.counts.fn << "\n";
  return out.str();
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::vector<double>& ious, double conf, const std::string& out_path) {
  const auto preds = list_label_files(pred_dir);
  const auto gts = list_label_files(gt_dir);

  std::vector<std::string> unmatched;
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) unmatched.push_back(stem + " (prediction only)");
  }
  for (const auto& [stem, path] : gts) {
    if (!preds.count(stem)) unmatched.push_back(stem + " (ground truth only)");
  }
  if (!unmatched.empty()) {
    std::ostringstream msg;
    msg << "unmatched file stems:";
    for (const std::string& s : unmatched) msg << "\n  " << s;
    throw InputError(msg.str());
  }

  Dataset data;
  for (const auto& [stem, path] : gts) {
    ImageSample sample;
    sample.annotations = parse_labels(read_file(path));
    sample.detections = parse_predictions(read_file(preds.at(stem)));
    data[stem] = std::move(sample);
  }

  MatchingConfig operating;
  operating.confidence_threshold = conf;
  operating.iou_threshold = 0.5;
  const EvalReport report = evaluate(data, ious, operating);
  const std::string text = format_report(report);
  std::cout << text;
  if (!out_path.empty()) write_file(out_path, text);
  return 0;
}

int run_bias(const std::string& pred_dir, const std::string& mode, const std::string& out_dir,
             const std::string& config_path) {
  BiasConfig cfg;
  if (!config_path.empty()) cfg = parse_bias_config(read_file(config_path));
  if (mode == "fixed") {
    cfg.mode = BiasMode::Fixed;
  } else if (mode == "variable") {
    cfg.mode = BiasMode::Variable;
  } else if (!mode.empty()) {
    throw InputError(detail::cat("unknown bias mode '", mode, "'"));
  }

  const auto preds = list_label_files(pred_dir);
  fs::create_directories(out_dir);
  std::size_t boxes = 0;
  for (const auto& [stem, path] : preds) {
    std::vector<Detection> dets;
    try {
      dets = parse_predictions(read_file(path));
    } catch (const std::invalid_argument& e) {
      throw InputError(detail::cat(path.string(), ": ", e.what()));
    }
    boxes += dets.size();
    write_file(fs::path(out_dir) / (stem + ".txt"), write_predictions(compensate_all(dets, cfg)));
  }
  std::cout << "compensated " << boxes << " boxes across " << preds.size() << " files\n";
  return 0;
}

int run_alarm(const std::string& seq_path, std::vector<int> sizes, const std::string& policy_name,
              const std::string& out_path) {
  const FrameDetectionSeq seq = parse_sequence(read_file(seq_path));
  if (sizes.empty()) sizes = default_window_sizes();
  WindowPolicy policy;
  if (policy_name == "sliding") {
    policy = WindowPolicy::Sliding;
  } else if (policy_name == "disjoint") {
    policy = WindowPolicy::Disjoint;
  } else {
    throw InputError(detail::cat("unknown window policy '", policy_name, "'"));
  }
  const AlarmCurve curve = alarm_curve(seq, sizes, policy);
  const std::string text = format_curve(curve);
  std::cout << text;
  if (!out_path.empty()) write_file(out_path, text);
  return 0;
}

int run_forward(const std::string& ckpt_path, int input_size, std::uint64_t seed, double conf,
                double nms_iou, const std::string& out_path) {
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(ckpt_path);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  if (input_size != 0 && input_size != ckpt.config.input_size) {
    throw InputError(detail::cat("checkpoint expects input size ", ckpt.config.input_size,
                                 ", got --input-size ", input_size));
  }
  const int s = ckpt.config.input_size;
  const Tensor x = random_uniform({s, s, 3}, 0.0, 1.0, seed);
  const HeadOutput head = full_forward(x, ckpt);

  std::cout << "scale8=" << head.s8.shape_str() << "\n";
  std::cout << "scale16=" << head.s16.shape_str() << "\n";
  std::cout << "scale32=" << head.s32.shape_str() << "\n";

  const std::vector<Detection> raw = decode_head(head, ckpt.config, default_anchors(ckpt.config));
  const std::vector<Detection> kept = nms(confidence_filter(raw, conf), nms_iou);
  std::cout << "decoded=" << raw.size() << "\n";
  std::cout << "detections=" << kept.size() << "\n";
  if (!out_path.empty()) write_file(out_path, write_predictions(kept));
  return 0;
}

int run_gradcheck(int size, std::uint64_t seed, double tol, bool corrupt) {
  NetworkConfig cfg;
  cfg.input_size = size;
  cfg.base_channels = 4;
  cfg.validate();

  const double block_tol = tol * 0.1;
  bool all_pass = true;
  bool first_block = true;

  auto report = [&](const std::string& block, const std::vector<BlockGradients>& grads,
                    double rel_tol) {
    for (const auto& g : grads) {
      Tensor analytic = g.analytic;
      if (corrupt && first_block) {
        // negative-control hook: poison the very first gradient
        if (analytic.size() > 0) analytic[0] += 0.5;
        first_block = false;
      }
      const GradCheckReport r =
          compare_gradients(block + "/" + g.input_name, analytic, g.numeric, rel_tol,
                            rel_tol * 1e-2);
      std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name
                << " max_rel_err=" << r.max_rel_err << " max_abs_diff=" << r.max_abs_diff
                << "\n";
      all_pass = all_pass && r.pass;
    }
  };

  Tensor f = random_uniform({4, 4, 4}, -1.5, 1.5, seed ^ 0x11);
  ChannelAttentionParams cp = ChannelAttentionParams::seeded(4, 4, seed ^ 0x12);
  report("channel_attention",
         block_gradients({{"f", f}, {"w1", cp.w1}, {"b1", cp.b1}, {"w2", cp.w2}, {"b2", cp.b2}},
                         [&](Tape& t, const std::vector<ad::VarId>& v) {
                           return ad::channel_attention(
                               t, v[0], ChannelAttentionVars{v[1], v[2], v[3], v[4], cp.reduction});
                         }),
         block_tol);

  SpatialAttentionParams sp = SpatialAttentionParams::seeded(seed ^ 0x13);
  report("spatial_attention",
         block_gradients({{"f", f}, {"kernel", sp.kernel}, {"bias", sp.bias}},
                         [&](Tape& t, const std::vector<ad::VarId>& v) {
                           return ad::spatial_attention(
                               t, v[0], SpatialAttentionVars{v[1], v[2], sp.kernel_extent()});
                         }),
         block_tol);

  CBAMParams cb = CBAMParams::seeded(4, 4, seed ^ 0x14);
  report("cbam_forward",
         block_gradients(
             {{"f", f},
              {"w1", cb.channel.w1},
              {"b1", cb.channel.b1},
              {"w2", cb.channel.w2},
              {"b2", cb.channel.b2},
              {"kernel", cb.spatial.kernel},
              {"kbias", cb.spatial.bias}},
             [&](Tape& t, const std::vector<ad::VarId>& v) {
               return ad::cbam_forward(
                   t, v[0],
                   CBAMVars{{v[1], v[2], v[3], v[4], cb.channel.reduction},
                            {v[5], v[6], cb.spatial.kernel_extent()}});
             }),
         block_tol);

  ChannelAttentionParams fp = ChannelAttentionParams::seeded(5, 5, seed ^ 0x15);
  Tensor seg = random_uniform({4, 4, 1}, 0.05, 0.95, seed ^ 0x16);
  report("fused_concat_attention",
         block_gradients(
             {{"f", f}, {"seg", seg}, {"w1", fp.w1}, {"b1", fp.b1}, {"w2", fp.w2}, {"b2", fp.b2}},
             [&](Tape& t, const std::vector<ad::VarId>& v) {
               return ad::fused_concat_attention(
                   t, v[0], v[1], ChannelAttentionVars{v[2], v[3], v[4], v[5], fp.reduction});
             }),
         block_tol);

  ModelParams model = ModelParams::seeded(cfg, seed ^ 0x17);
  Tensor c3_in = random_uniform({4, 4, cfg.c3()}, -1.0, 1.0, seed ^ 0x18);
  report("c3_cbam",
         block_gradients({{"x", c3_in}},
                         [&](Tape& t, const std::vector<ad::VarId>& v) {
                           return ad::c3_forward(t, v[0], watch(t, model.backbone.c3_p3), true);
                         }),
         block_tol);

  Tensor image = random_uniform({size, size, 3}, 0.25, 0.75, seed ^ 0x19);
  report("full_forward",
         block_gradients({{"x", image}},
                         [&](Tape& t, const std::vector<ad::VarId>& v) {
                           ModelVars vars = watch(t, model);
                           std::array<ad::VarId, 3> head = ad::full_forward(t, v[0], vars, cfg);
                           return ad::add(
                               t, ad::add(t, ad::sum(t, head[0]), ad::sum(t, head[1])),
                               ad::sum(t, head[2]));
                         }),
         tol);

  std::cout << (all_pass ? "gradcheck: all blocks pass\n" : "gradcheck: FAILURES above\n");
  return all_pass ? 0 : kExitInternal;
}

int run_crop(const std::string& manifest_path, int size, std::uint64_t seed,
             const std::string& out_dir) {
  const fs::path manifest_file(manifest_path);
  const DatasetManifest manifest = parse_manifest(read_file(manifest_file));
  const fs::path base = manifest_file.parent_path();
  fs::create_directories(out_dir);

  std::ostringstream windows;
  std::size_t done = 0, skipped = 0;
  for (const ManifestEntry& e : manifest.entries) {
    if (size > std::min(e.width, e.height)) {
      std::cerr << "warning: skipping " << e.image_id << " (" << e.width << "x" << e.height
                << " smaller than crop " << size << ")\n";
      ++skipped;
      continue;
    }
    const std::vector<Annotation> anns = parse_labels(read_file(base / e.label_path));
    CropSpec spec;
    spec.output_size = size;
    spec.seed = seed ^ fnv1a64(e.image_id);
    const CropResult r = square_crop(e.width, e.height, anns, spec);
    windows << e.image_id << '\t' << r.window.x << '\t' << r.window.y << '\t' << r.window.size
            << "\n";
    write_file(fs::path(out_dir) / (e.image_id + ".txt"), write_labels(r.annotations));
    ++done;
  }
  write_file(fs::path(out_dir) / "windows.tsv", windows.str());
  std::cout << "cropped " << done << " images, skipped " << skipped << "\n";
  return 0;
}

int run_init(const std::string& out_path, int input_size, int base_channels, int anchors,
             int classes, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.input_size = input_size;
  cfg.base_channels = base_channels;
  cfg.anchors_per_scale = anchors;
  cfg.class_count = classes;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const Checkpoint ckpt = ModelParams::seeded(cfg, seed);
  save_checkpoint(ckpt, out_path);
  std::size_t count = 0;
  for_each_tensor(ckpt, [&count](const std::string&, const Tensor&) { ++count; });
  std::cout << "wrote " << out_path << " (" << count << " tensors, S=" << cfg.input_size << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-backbone fusion detector toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config")->description("key=value config file; flags take precedence");

  // eval
  std::string pred_dir, gt_dir, out_path;
  std::vector<double> ious{0.25, 0.5};
  double conf = 0.25;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  eval_cmd->add_option("pred_dir", pred_dir, "directory of prediction files")->required();
  eval_cmd->add_option("gt_dir", gt_dir, "directory of ground-truth label files")->required();
  eval_cmd->add_option("--iou", ious, "IoU thresholds for mAP")->delimiter(',');
  eval_cmd->add_option("--conf", conf, "confidence threshold for FNR/FDR");
  eval_cmd->add_option("--out", out_path, "report file");

  // bias
  std::string bias_mode = "fixed", bias_out, bias_config;
  CLI::App* bias_cmd = app.add_subcommand("bias", "apply labeling-bias compensation");
  bias_cmd->add_option("pred_dir", pred_dir, "directory of prediction files")->required();
  bias_cmd->add_option("--mode", bias_mode, "fixed|variable");
  bias_cmd->add_option("--out", bias_out, "output directory")->required();
  bias_cmd->add_option("--bias-config", bias_config, "bias config file");

  // alarm
  std::string seq_path, policy = "sliding";
  std::vector<int> sizes;
  CLI::App* alarm_cmd = app.add_subcommand("alarm", "window-level FNR over a frame sequence");
  alarm_cmd->add_option("seq_file", seq_path, "sequence file: 'frame gt det' lines")->required();
  alarm_cmd->add_option("--sizes", sizes, "window sizes")->delimiter(',');
  alarm_cmd->add_option("--policy", policy, "sliding|disjoint");
  alarm_cmd->add_option("--out", out_path, "curve output file");

  // forward
  std::string ckpt_path;
  int input_size = 0;
  std::uint64_t seed = 0;
  double fwd_conf = 0.25, fwd_nms = 0.45;
  CLI::App* fwd_cmd = app.add_subcommand("forward", "run the network on a seeded random input");
  fwd_cmd->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  fwd_cmd->add_option("--input-size", input_size, "expected input size (validated)");
  fwd_cmd->add_option("--seed", seed, "input seed");
  fwd_cmd->add_option("--conf", fwd_conf, "confidence filter threshold");
  fwd_cmd->add_option("--nms", fwd_nms, "NMS IoU threshold");
  fwd_cmd->add_option("--out", out_path, "decoded detections file");

  // gradcheck
  int gc_size = 32;
  double tol = 1e-3;
  bool corrupt = false;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "reverse-mode vs finite differences");
  gc_cmd->add_option("--size", gc_size, "input size for the end-to-end check");
  gc_cmd->add_option("--seed", seed, "parameter seed");
  gc_cmd->add_option("--tol", tol, "relative tolerance (end-to-end)");
  gc_cmd->add_flag("--corrupt", corrupt, "poison one gradient (negative control)");

  // crop
  std::string manifest_path, crop_out;
  int crop_size = 640;
  CLI::App* crop_cmd = app.add_subcommand("crop", "square-crop dataset geometry");
  crop_cmd->add_option("manifest", manifest_path, "dataset manifest")->required();
  crop_cmd->add_option("--size", crop_size, "crop size in pixels");
  crop_cmd->add_option("--seed", seed, "crop seed");
  crop_cmd->add_option("--out", crop_out, "output directory")->required();

  // init
  std::string init_out;
  int init_size = 64, init_base = 8, init_anchors = 3, init_classes = 1;
  CLI::App* init_cmd = app.add_subcommand("init", "create a seeded toy checkpoint");
  init_cmd->add_option("--out", init_out, "checkpoint path")->required();
  init_cmd->add_option("--input-size", init_size, "input size (multiple of 32)");
  init_cmd->add_option("--base-channels", init_base, "base channel width");
  init_cmd->add_option("--anchors", init_anchors, "anchors per scale");
  init_cmd->add_option("--classes", init_classes, "class count");
  init_cmd->add_option("--seed", seed, "parameter seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitInput;
  }

  try {
    if (app.got_subcommand(eval_cmd)) return run_eval(pred_dir, gt_dir, ious, conf, out_path);
    if (app.got_subcommand(bias_cmd)) return run_bias(pred_dir, bias_mode, bias_out, bias_config);
    if (app.got_subcommand(alarm_cmd)) return run_alarm(seq_path, sizes, policy, out_path);
    if (app.got_subcommand(fwd_cmd)) {
      return run_forward(ckpt_path, input_size, seed, fwd_conf, fwd_nms, out_path);
    }
    if (app.got_subcommand(gc_cmd)) return run_gradcheck(gc_size, seed, tol, corrupt);
    if (app.got_subcommand(crop_cmd)) return run_crop(manifest_path, crop_size, seed, crop_out);
    if (app.got_subcommand(init_cmd)) {
      return run_init(init_out, init_size, init_base, init_anchors, init_classes, seed);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
