#pragma once

#include <cstdint>
#include <string_view>

#include "uedge/engine.hpp"

namespace uedge {

// 2|a & b| / (|a| + |b|); two empty masks score 1.
double dice(const Mask& a, const Mask& b);

// Longest vertical run extent (last - first + 1) of set pixels over all
// columns; 0 for an empty mask.
std::int64_t vertical_diameter(const Mask& m);

// Vertical cup-to-disc ratio.
double cdr(const Mask& cup, const Mask& disc);

enum class CdrClass { healthy_range, glaucoma_range, indeterminate };

// Population bands: healthy 0.39 +- 0.15, glaucomatous 0.65 +- 0.13.
inline constexpr double kHealthyCdrMean = 0.39;
inline constexpr double kHealthyCdrStd = 0.15;
inline constexpr double kGlaucomaCdrMean = 0.65;
inline constexpr double kGlaucomaCdrStd = 0.13;

CdrClass classify_cdr(double c);
std::string_view to_string(CdrClass c) noexcept;

// Which horizontal image side is nasal. For a right eye the nasal side of
// the disc faces image right.
enum class Laterality { left, right };

Laterality parse_laterality(std::string_view s);
std::string_view to_string(Laterality l) noexcept;

// Mean neuroretinal rim thickness (pixels) per 90 degree sector.
struct RimProfile {
  double inferior = 0.0;
  double superior = 0.0;
  double nasal = 0.0;
  double temporal = 0.0;
  // Rays on which the cup reaches beyond the disc boundary; their thickness
  // is clamped to zero.
  int violating_rays = 0;
  // Cup pixels that lie outside the disc mask.
  std::int64_t cup_pixels_outside_disc = 0;
};

inline constexpr int kRimRays = 360;

RimProfile rim_profile(const Mask& cup, const Mask& disc, Laterality laterality);

// Strict I > S > N > T.
bool istn_check(const RimProfile& p);

}  // namespace uedge
