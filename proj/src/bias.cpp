#include "yffn/bias.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

std::vector<SizeCategory> default_categories() {
  return {
      {"ExtraSmall", 0.000, 0.034, 0.000, 0.014, 0.0155, 0.0110},
      {"Small", 0.034, 0.059, 0.014, 0.027, 0.0107, 0.0055},
      {"Medium", 0.059, 0.094, 0.027, 0.044, 0.0071, 0.0020},
      {"Large", 0.094, 0.144, 0.044, 0.072, 0.0044, 0.0014},
      {"ExtraLarge", 0.144, 1.000, 0.072, 1.000, 0.0022, 0.0011},
  };
}

const SizeCategory& categorize(const BBox& box, const std::vector<SizeCategory>& categories) {
  if (categories.empty()) {
    throw std::invalid_argument("categorize requires a non-empty category list");
  }
  for (const SizeCategory& c : categories) {
    if (box.w >= c.w_min && box.w < c.w_max) return c;
  }
  // the final interval is closed at its upper bound
  const SizeCategory& last = categories.back();
  if (box.w >= last.w_min && box.w <= last.w_max) return last;
  throw std::invalid_argument(detail::cat("width ", box.w, " falls outside every category"));
}

BBox compensate(const BBox& box, const BiasConfig& cfg) {
  double lw, lh;
  if (cfg.mode == BiasMode::Fixed) {
    lw = cfg.fixed_lambda_w;
    lh = cfg.fixed_lambda_h;
  } else {
    const SizeCategory& c = categorize(box, cfg.categories);
    lw = c.lambda_w;
    lh = c.lambda_h;
  }
  const double area = box.w * box.h;
  BBox out = box;
  out.w = box.w + lw * area;
  out.h = box.h + lh * area;

  // clamp so [c - e/2, c + e/2] stays within [0, 1] on both axes
  out.w = std::min({out.w, 2.0 * box.cx, 2.0 * (1.0 - box.cx)});
  out.h = std::min({out.h, 2.0 * box.cy, 2.0 * (1.0 - box.cy)});
  out.w = std::max(out.w, 0.0);
  out.h = std::max(out.h, 0.0);
  return out;
}

std::vector<Detection> compensate_all(const std::vector<Detection>& dets, const BiasConfig& cfg) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    Detection adjusted = d;
    adjusted.bbox = compensate(d.bbox, cfg);
    out.push_back(adjusted);
  }
  return out;
}

BiasConfig parse_bias_config(const std::string& text) {
  BiasConfig cfg;
  std::vector<SizeCategory> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw std::invalid_argument(detail::cat("bias config line ", line_no, ": expected key=value"));
    }
    auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t\r");
      const std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "mode") {
      if (value == "fixed") {
        cfg.mode = BiasMode::Fixed;
      } else if (value == "variable") {
        cfg.mode = BiasMode::Variable;
      } else {
        throw std::invalid_argument(detail::cat("bias config line ", line_no, ": unknown mode '",
                                                value, "'"));
      }
    } else if (key == "lambda_w") {
      cfg.fixed_lambda_w = std::stod(value);
    } else if (key == "lambda_h") {
      cfg.fixed_lambda_h = std::stod(value);
    } else if (key == "category") {
      SizeCategory c;
      std::istringstream row(value);
      if (!(row >> c.name >> c.w_min >> c.w_max >> c.h_min >> c.h_max >> c.lambda_w >>
            c.lambda_h)) {
        throw std::invalid_argument(detail::cat("bias config line ", line_no,
                                                ": malformed category row"));
      }
      rows.push_back(c);
    } else {
      throw std::invalid_argument(detail::cat("bias config line ", line_no, ": unknown key '", key,
                                              "'"));
    }
  }
  if (!rows.empty()) cfg.categories = std::move(rows);
  return cfg;
}

std::string format_bias_config(const BiasConfig& cfg) {
  std::ostringstream out;
  out << "mode = " << (cfg.mode == BiasMode::Fixed ? "fixed" : "variable") << "\n";
  out << std::setprecision(12);
  out << "lambda_w = " << cfg.fixed_lambda_w << "\n";
  out << "lambda_h = " << cfg.fixed_lambda_h << "\n";
  for (const SizeCategory& c : cfg.categories) {
    out << "category = " << c.name << ' ' << c.w_min << ' ' << c.w_max << ' ' << c.h_min << ' '
        << c.h_max << ' ' << c.lambda_w << ' ' << c.lambda_h << "\n";
  }
  return out.str();
}

}  // namespace yffn
