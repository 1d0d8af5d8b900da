#include "yffn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

namespace {

void check_range(double v, double lo, double hi, const char* field, int line_no) {
  if (!(v >= lo && v <= hi)) {
    throw std::invalid_argument(detail::cat("label line ", line_no, ": field '", field,
                                            "' value ", v, " outside [", lo, ", ", hi, "]"));
  }
}

BBox parse_box(std::istringstream& row, int line_no) {
  BBox b;
  if (!(row >> b.cx >> b.cy >> b.w >> b.h)) {
    throw std::invalid_argument(detail::cat("label line ", line_no, ": malformed box fields"));
  }
  check_range(b.cx, 0.0, 1.0, "cx", line_no);
  check_range(b.cy, 0.0, 1.0, "cy", line_no);
  check_range(b.w, 0.0, 1.0, "w", line_no);
  check_range(b.h, 0.0, 1.0, "h", line_no);
  if (b.w <= 0.0 || b.h <= 0.0) {
    throw std::invalid_argument(detail::cat("label line ", line_no, ": box extent must be > 0"));
  }
  return b;
}

int parse_class(std::istringstream& row, int line_no) {
  int class_id;
  if (!(row >> class_id) || class_id < 0) {
    throw std::invalid_argument(detail::cat("label line ", line_no,
                                            ": field 'class_id' must be a non-negative integer"));
  }
  return class_id;
}

void expect_line_end(std::istringstream& row, int line_no) {
  std::string extra;
  if (row >> extra) {
    throw std::invalid_argument(detail::cat("label line ", line_no, ": unexpected trailing '",
                                            extra, "'"));
  }
}

std::ostream& box_out(std::ostream& out, const BBox& b) {
  return out << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h;
}

struct PixelRect {
  double x1, y1, x2, y2;
  double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
};

PixelRect to_pixels(const BBox& b, int w, int h) {
  return {(b.cx - b.w / 2.0) * w, (b.cy - b.h / 2.0) * h, (b.cx + b.w / 2.0) * w,
          (b.cy + b.h / 2.0) * h};
}

PixelRect intersect(const PixelRect& r, const CropWindow& win) {
  return {std::max(r.x1, static_cast<double>(win.x)),
          std::max(r.y1, static_cast<double>(win.y)),
          std::min(r.x2, static_cast<double>(win.x + win.size)),
          std::min(r.y2, static_cast<double>(win.y + win.size))};
}

std::string image_name(int index) {
  std::ostringstream os;
  os << "img_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

std::vector<Annotation> parse_labels(const std::string& text) {
  std::vector<Annotation> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    Annotation a;
    a.class_id = parse_class(row, line_no);
    a.bbox = parse_box(row, line_no);
    expect_line_end(row, line_no);
    out.push_back(a);
  }
  return out;
}

std::string write_labels(const std::vector<Annotation>& annotations) {
  std::ostringstream out;
  out << std::setprecision(12);
  for (const Annotation& a : annotations) {
    out << a.class_id << ' ';
    box_out(out, a.bbox) << "\n";
  }
  return out.str();
}

std::vector<Detection> parse_predictions(const std::string& text) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    Detection d;
    d.class_id = parse_class(row, line_no);
    d.bbox = parse_box(row, line_no);
    if (!(row >> d.confidence)) {
      throw std::invalid_argument(detail::cat("label line ", line_no,
                                              ": missing confidence field"));
    }
    check_range(d.confidence, 0.0, 1.0, "confidence", line_no);
    expect_line_end(row, line_no);
    out.push_back(d);
  }
  return out;
}

std::string write_predictions(const std::vector<Detection>& detections) {
  std::ostringstream out;
  out << std::setprecision(12);
  for (const Detection& d : detections) {
    out << d.class_id << ' ';
    box_out(out, d.bbox) << ' ' << d.confidence << "\n";
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest manifest;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::set<std::string> ids;
  std::set<std::pair<std::string, long>> frames;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 4 || fields.size() > 6) {
      throw std::invalid_argument(detail::cat("manifest line ", line_no, ": expected 4-6 fields, got ",
                                              fields.size()));
    }
    ManifestEntry e;
    e.image_id = fields[0];
    try {
      e.width = std::stoi(fields[1]);
      e.height = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw std::invalid_argument(detail::cat("manifest line ", line_no, ": bad image size"));
    }
    if (e.width < 1 || e.height < 1) {
      throw std::invalid_argument(detail::cat("manifest line ", line_no, ": bad image size"));
    }
    e.label_path = fields[3];
    if (fields.size() >= 5 && !fields[4].empty()) {
      try {
        e.frame_index = std::stol(fields[4]);
      } catch (const std::exception&) {
        throw std::invalid_argument(detail::cat("manifest line ", line_no, ": bad frame index"));
      }
    }
    if (fields.size() == 6 && !fields[5].empty()) e.camera_position = fields[5];

    if (!ids.insert(e.image_id).second) {
      throw std::invalid_argument(detail::cat("manifest line ", line_no, ": duplicate image id '",
                                              e.image_id, "'"));
    }
    if (e.frame_index) {
      const std::string cam = e.camera_position.value_or("");
      if (!frames.insert({cam, *e.frame_index}).second) {
        throw std::invalid_argument(detail::cat("manifest line ", line_no,
                                                ": duplicate frame index ", *e.frame_index,
                                                " for camera '", cam, "'"));
      }
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::string write_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  for (const ManifestEntry& e : manifest.entries) {
    out << e.image_id << '\t' << e.width << '\t' << e.height << '\t' << e.label_path;
    if (e.frame_index || e.camera_position) {
      out << '\t' << (e.frame_index ? std::to_string(*e.frame_index) : "");
    }
    if (e.camera_position) out << '\t' << *e.camera_position;
    out << "\n";
  }
  return out.str();
}

CropResult square_crop(int image_width, int image_height,
                       const std::vector<Annotation>& annotations, const CropSpec& spec) {
  if (spec.output_size < 1) throw std::invalid_argument("crop output_size must be >= 1");
  if (spec.output_size > std::min(image_width, image_height)) {
    throw std::invalid_argument(detail::cat("crop output_size ", spec.output_size,
                                            " exceeds image ", image_width, "x", image_height));
  }
  if (!(spec.min_box_retention > 0.0 && spec.min_box_retention <= 1.0)) {
    throw std::invalid_argument("min_box_retention must be in (0, 1]");
  }

  Rng rng(spec.seed);
  const int out_size = spec.output_size;
  CropWindow window{0, 0, out_size};

  auto clamp_pos = [](long v, int hi) {
    return static_cast<int>(std::clamp<long>(v, 0, hi));
  };

  if (annotations.empty()) {
    window.x = clamp_pos(rng.uniform_int(0, image_width - out_size), image_width - out_size);
    window.y = clamp_pos(rng.uniform_int(0, image_height - out_size), image_height - out_size);
  } else {
    const BBox& target = annotations.front().bbox;
    const PixelRect target_px = to_pixels(target, image_width, image_height);
    const double target_area = target_px.area();
    const long cx = std::lround(target.cx * image_width);
    const long cy = std::lround(target.cy * image_height);

    // coarse region around the object, clamped to the frame
    const int coarse = std::min({image_width, image_height, 2 * out_size});
    const int coarse_x = clamp_pos(cx - coarse / 2, image_width - coarse);
    const int coarse_y = clamp_pos(cy - coarse / 2, image_height - coarse);

    bool placed = false;
    for (int draw = 0; draw < 32 && !placed; ++draw) {
      CropWindow cand{
          coarse_x + static_cast<int>(rng.uniform_int(0, coarse - out_size)),
          coarse_y + static_cast<int>(rng.uniform_int(0, coarse - out_size)), out_size};
      const double kept = intersect(target_px, cand).area();
      if (target_area > 0.0 && kept / target_area >= spec.min_box_retention) {
        window = cand;
        placed = true;
      }
    }
    if (!placed) {
      // deterministic object-centered fallback
      window.x = clamp_pos(cx - out_size / 2, image_width - out_size);
      window.y = clamp_pos(cy - out_size / 2, image_height - out_size);
    }
  }

  CropResult result;
  result.window = window;
  for (const Annotation& a : annotations) {
    const PixelRect px = to_pixels(a.bbox, image_width, image_height);
    const PixelRect kept = intersect(px, window);
    const double original = px.area();
    if (original <= 0.0 || kept.area() / original < spec.min_box_retention) continue;
    Annotation remapped = a;
    remapped.bbox.cx = ((kept.x1 + kept.x2) / 2.0 - window.x) / out_size;
    remapped.bbox.cy = ((kept.y1 + kept.y2) / 2.0 - window.y) / out_size;
    remapped.bbox.w = (kept.x2 - kept.x1) / out_size;
    remapped.bbox.h = (kept.y2 - kept.y1) / out_size;
    result.annotations.push_back(remapped);
  }
  return result;
}

Fixture gen_fixture_dataset(int n_images, double background_fraction, std::uint64_t seed) {
  if (n_images < 1) throw std::invalid_argument("fixture needs at least one image");
  if (!(background_fraction >= 0.0 && background_fraction <= 1.0)) {
    throw std::invalid_argument("background_fraction must be in [0, 1]");
  }

  Fixture fx;
  for (int i = 0; i < n_images; ++i) {
    const std::string id = image_name(i);
    Rng rng(seed ^ fnv1a64(id));
    ManifestEntry entry;
    entry.image_id = id;
    entry.width = 640;
    entry.height = 640;
    entry.label_path = "labels/" + id + ".txt";
    fx.manifest.entries.push_back(entry);

    std::vector<Annotation> gts;
    std::vector<Detection> dets;
    if (rng.next_real() >= background_fraction) {
      // up to three disjoint boxes on a 4x4 grid of cells
      const int count = static_cast<int>(rng.uniform_int(1, 3));
      std::vector<int> cells;
      while (static_cast<int>(cells.size()) < count) {
        const int cell = static_cast<int>(rng.uniform_int(0, 15));
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
      }
      for (int cell : cells) {
        Annotation a;
        a.class_id = 0;
        a.bbox.cx = (cell % 4 + 0.5) / 4.0;
        a.bbox.cy = (cell / 4 + 0.5) / 4.0;
        a.bbox.w = rng.uniform(0.05, 0.15);
        a.bbox.h = rng.uniform(0.05, 0.15);
        gts.push_back(a);

        if (rng.next_real() < 0.8) {  // true positive with mild jitter
          Detection d;
          d.class_id = 0;
          d.bbox = a.bbox;
          d.bbox.cx += rng.uniform(-0.005, 0.005);
          d.bbox.cy += rng.uniform(-0.005, 0.005);
          d.confidence = rng.uniform(0.3, 0.95);
          dets.push_back(d);
        }
      }
    }
    if (rng.next_real() < 0.15) {  // stray false positive near the border
      Detection d;
      d.class_id = 0;
      d.bbox = {0.95, 0.95, 0.04, 0.04};
      d.confidence = rng.uniform(0.3, 0.9);
      dets.push_back(d);
    }
    fx.labels[id] = std::move(gts);
    fx.detections[id] = std::move(dets);
  }
  return fx;
}

Fixture gen_fixture_with_counts(int tp, int fp, int fn, std::uint64_t seed) {
  if (tp < 0 || fp < 0 || fn < 0) throw std::invalid_argument("counts must be non-negative");
  Rng rng(seed);
  const int total = tp + fp + fn;
  const int grid = std::max(2, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(total)))));

  Fixture fx;
  const std::string id = image_name(0);
  ManifestEntry entry;
  entry.image_id = id;
  entry.width = 640;
  entry.height = 640;
  entry.label_path = "labels/" + id + ".txt";
  fx.manifest.entries.push_back(entry);

  auto cell_box = [grid](int cell) {
    BBox b;
    b.cx = (cell % grid + 0.5) / grid;
    b.cy = (cell / grid + 0.5) / grid;
    b.w = 0.6 / grid;
    b.h = 0.6 / grid;
    return b;
  };

  std::vector<Annotation> gts;
  std::vector<Detection> dets;
  int cell = 0;
  for (int i = 0; i < tp; ++i, ++cell) {
    Annotation a{cell_box(cell), 0};
    gts.push_back(a);
    dets.push_back({a.bbox, rng.uniform(0.6, 0.95), 0});
  }
  for (int i = 0; i < fn; ++i, ++cell) {
    gts.push_back({cell_box(cell), 0});
  }
  for (int i = 0; i < fp; ++i, ++cell) {
    dets.push_back({cell_box(cell), rng.uniform(0.6, 0.95), 0});
  }
  fx.labels[id] = std::move(gts);
  fx.detections[id] = std::move(dets);
  return fx;
}

}  // namespace yffn
