#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "yffn/detect.hpp"
#include "yffn/metrics.hpp"

namespace yffn {

/// Normalized center-format label text: "class_id cx cy w h" per line, one
/// object per line; an empty file is a background image. parse rejects
/// out-of-range coordinates with the line number and field name.
std::vector<Annotation> parse_labels(const std::string& text);
std::string write_labels(const std::vector<Annotation>& annotations);

/// Prediction files extend the label format with a sixth confidence field.
std::vector<Detection> parse_predictions(const std::string& text);
std::string write_predictions(const std::vector<Detection>& detections);

struct ManifestEntry {
  std::string image_id;
  int width = 0, height = 0;
  std::string label_path;
  std::optional<long> frame_index;
  std::optional<std::string> camera_position;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

/// Tab-separated, one entry per line:
/// image_id, width, height, label_path, [frame_index], [camera_position].
DatasetManifest parse_manifest(const std::string& text);
std::string write_manifest(const DatasetManifest& manifest);

struct CropSpec {
  int output_size = 640;
  std::uint64_t seed = 0;
  double min_box_retention = 0.8;
};

struct CropWindow {
  int x = 0, y = 0, size = 0;  // pixels, top-left corner
};

struct CropResult {
  CropWindow window;
  std::vector<Annotation> annotations;  // remapped to crop-relative coordinates
};

/// Coarse-then-random square cropping on geometry only. The coarse stage
/// centers a square (min(2*output_size, min(W, H)) wide) on the first
/// annotation, clamped to the frame; the random stage draws up to 32
/// output_size placements inside it and keeps the first that retains at least
/// min_box_retention of the first box's area, falling back to the
/// drone-centered window. Background images crop uniformly at random.
/// Surviving boxes are clipped and renormalized; boxes retaining less than
/// min_box_retention of their area are dropped.
CropResult square_crop(int image_width, int image_height,
                       const std::vector<Annotation>& annotations, const CropSpec& spec);

struct Fixture {
  DatasetManifest manifest;
  std::map<std::string, std::vector<Annotation>> labels;
  std::map<std::string, std::vector<Detection>> detections;
};

/// Reproducible synthetic ground truth plus detections for metric tests;
/// about background_fraction of the images carry no objects.
Fixture gen_fixture_dataset(int n_images, double background_fraction, std::uint64_t seed);

/// Fixture with an exact confusion composition at IoU 0.5 / confidence 0.25:
/// `tp` detections matching their boxes, `fp` stray detections, `fn` boxes
/// without detections.
Fixture gen_fixture_with_counts(int tp, int fp, int fn, std::uint64_t seed);

}  // namespace yffn
