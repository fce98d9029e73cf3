#include "uedge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace uedge {

namespace {

void require_same_dims(const Mask& a, const Mask& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw_shape(std::string(op) + ": mask dims differ");
  }
}

bool in_band(double c, double mean, double sd) { return c >= mean - sd && c <= mean + sd; }

}  // namespace

double dice(const Mask& a, const Mask& b) {
  require_same_dims(a, b, "dice");
  std::int64_t inter = 0;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] != 0 && b.data[i] != 0) ? 1 : 0;
    total += (a.data[i] != 0 ? 1 : 0) + (b.data[i] != 0 ? 1 : 0);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

std::int64_t vertical_diameter(const Mask& m) {
  std::int64_t best = 0;
  for (std::int64_t x = 0; x < m.width; ++x) {
    std::int64_t first = -1;
    std::int64_t last = -1;
    for (std::int64_t y = 0; y < m.height; ++y) {
      if (m.at(y, x) == 0) continue;
      if (first < 0) first = y;
      last = y;
    }
    if (first >= 0) best = std::max(best, last - first + 1);
  }
  return best;
}

double cdr(const Mask& cup, const Mask& disc) {
  require_same_dims(cup, disc, "cdr");
  const std::int64_t d = vertical_diameter(disc);
  if (d == 0) throw Error(ErrorKind::argument, "cdr: disc mask is empty");
  return static_cast<double>(vertical_diameter(cup)) / static_cast<double>(d);
}

CdrClass classify_cdr(double c) {
  if (!(c >= 0.0)) throw Error(ErrorKind::argument, "classify_cdr: ratio must be >= 0");
  const bool healthy = in_band(c, kHealthyCdrMean, kHealthyCdrStd);
  const bool glaucoma = in_band(c, kGlaucomaCdrMean, kGlaucomaCdrStd);
  if (healthy && !glaucoma) return CdrClass::healthy_range;
  if (glaucoma && !healthy) return CdrClass::glaucoma_range;
  return CdrClass::indeterminate;
}

std::string_view to_string(CdrClass c) noexcept {
  switch (c) {
    case CdrClass::healthy_range: return "healthy_range";
    case CdrClass::glaucoma_range: return "glaucoma_range";
    case CdrClass::indeterminate: return "indeterminate";
  }
  return "?";
}

Laterality parse_laterality(std::string_view s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  throw Error(ErrorKind::argument, "laterality must be 'left' or 'right'");
}

std::string_view to_string(Laterality l) noexcept { return l == Laterality::left ? "left" : "right"; }

RimProfile rim_profile(const Mask& cup, const Mask& disc, Laterality laterality) {
  require_same_dims(cup, disc, "rim_profile");
  double sx = 0.0;
  double sy = 0.0;
  std::int64_t n = 0;
  RimProfile p;
  for (std::int64_t y = 0; y < disc.height; ++y) {
    for (std::int64_t x = 0; x < disc.width; ++x) {
      if (disc.at(y, x) != 0) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        ++n;
      } else if (cup.at(y, x) != 0) {
        ++p.cup_pixels_outside_disc;
      }
    }
  }
  if (n == 0) throw Error(ErrorKind::argument, "rim_profile: disc mask is empty");
  const double cx = sx / static_cast<double>(n);
  const double cy = sy / static_cast<double>(n);

  constexpr double step = 0.25;
  const double reach = std::hypot(static_cast<double>(disc.width), static_cast<double>(disc.height));
  auto inside = [](const Mask& m, double fx, double fy) {
    const auto x = static_cast<std::int64_t>(std::floor(fx + 0.5));
    const auto y = static_cast<std::int64_t>(std::floor(fy + 0.5));
    return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(y, x) != 0;
  };

  double sums[4] = {0, 0, 0, 0};  // inferior, superior, image-right, image-left
  int counts[4] = {0, 0, 0, 0};
  for (int k = 0; k < kRimRays; ++k) {
    // Half-degree offset keeps rays off the sector boundaries, so mirrored
    // masks sample mirrored rays.
    const double deg = (k + 0.5) * 360.0 / kRimRays;
    const double rad = deg * std::numbers::pi / 180.0;
    const double dx = std::cos(rad);
    const double dy = std::sin(rad);  // image rows grow downward: +dy is inferior
    double disc_r = 0.0;
    double cup_r = 0.0;
    for (double r = 0.0; r <= reach; r += step) {
      const double fx = cx + r * dx;
      const double fy = cy + r * dy;
      if (inside(disc, fx, fy)) disc_r = r;
      if (inside(cup, fx, fy)) cup_r = r;
    }
    if (cup_r > disc_r) ++p.violating_rays;
    const double thickness = std::max(0.0, disc_r - cup_r);
    int sector;
    if (deg >= 45.0 && deg < 135.0) {
      sector = 0;
    } else if (deg >= 225.0 && deg < 315.0) {
      sector = 1;
    } else if (deg >= 135.0 && deg < 225.0) {
      sector = 3;
    } else {
      sector = 2;
    }
    sums[sector] += thickness;
    ++counts[sector];
  }
  auto mean = [&](int s) { return counts[s] ? sums[s] / counts[s] : 0.0; };
  p.inferior = mean(0);
  p.superior = mean(1);
  const double right_side = mean(2);
  const double left_side = mean(3);
  if (laterality == Laterality::right) {
    p.nasal = right_side;
    p.temporal = left_side;
  } else {
    p.nasal = left_side;
    p.temporal = right_side;
  }
  return p;
}

bool istn_check(const RimProfile& p) {
  return p.inferior > p.superior && p.superior > p.nasal && p.nasal > p.temporal;
}

}  // namespace uedge
