#pragma once

#include <string>
#include <vector>

#include "yffn/detect.hpp"

namespace yffn {

/// Size class with half-open width/height ratio intervals [min, max) (the last
/// interval closes at 1) and the box-enlargement factors for that class.
struct SizeCategory {
  std::string name;
  double w_min, w_max;
  double h_min, h_max;
  double lambda_w, lambda_h;
};

/// The five built-in categories with their interval bounds and scaling
/// factors; width intervals partition [0, 1].
std::vector<SizeCategory> default_categories();

enum class BiasMode { Fixed, Variable };

struct BiasConfig {
  BiasMode mode = BiasMode::Fixed;
  double fixed_lambda_w = 0.0057;
  double fixed_lambda_h = 0.0023;
  std::vector<SizeCategory> categories = default_categories();
};

/// Classification is width-primary: the category whose width interval
/// contains box.w. Height intervals are metadata only.
const SizeCategory& categorize(const BBox& box, const std::vector<SizeCategory>& categories);

/// w' = w + lambda_w * (w*h), h' = h + lambda_h * (w*h); the center is kept
/// and the result is clamped so the corner box stays inside the unit square.
BBox compensate(const BBox& box, const BiasConfig& cfg);

/// Elementwise compensate; confidences, classes and order untouched.
std::vector<Detection> compensate_all(const std::vector<Detection>& dets, const BiasConfig& cfg);

/// Line-oriented key=value text: keys mode, lambda_w, lambda_h, and one
/// "category = name w_min w_max h_min h_max lambda_w lambda_h" row per
/// category (rows replace the defaults as a whole). Unknown keys are errors.
BiasConfig parse_bias_config(const std::string& text);
std::string format_bias_config(const BiasConfig& cfg);

}  // namespace yffn
