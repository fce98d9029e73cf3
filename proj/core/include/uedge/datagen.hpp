#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uedge/engine.hpp"
#include "uedge/metrics.hpp"

namespace uedge {

// Parameters of one synthetic fundus-like sample: a bright, vertically oval
// disc on a darker textured background with a brighter cup ellipse inside.
// Geometry is in whole pixels so the masks rasterize exactly.
struct SynthSpec {
  std::uint64_t seed = 0;
  InputSize size{};
  std::int64_t disc_cx = 64;
  std::int64_t disc_cy = 64;
  std::int64_t disc_rx = 36;
  std::int64_t disc_ry = 40;
  std::int64_t cup_rx = 20;
  std::int64_t cup_ry = 16;
  // Cup centre relative to the disc centre; a positive dy moves the cup up
  // (superior), a positive dx moves it to image right.
  std::int64_t cup_dx = 0;
  std::int64_t cup_dy = 0;
  double noise = 0.03;
  Laterality laterality = Laterality::right;

  void validate() const;
};

struct SampleTruth {
  // (2 cup_ry + 1) / (2 disc_ry + 1): the vertical extents of the rasterized
  // ellipses through their centre columns.
  double cdr = 0.0;
  std::int64_t disc_pixels = 0;
  std::int64_t cup_pixels = 0;
};

struct Sample {
  Tensor image;
  Mask disc;
  Mask cup;
  SampleTruth truth;
};

// Pixel (y, x) belongs to the ellipse when
// ((x - cx) / rx)^2 + ((y - cy) / ry)^2 <= 1.
Mask rasterize_ellipse(std::int64_t height, std::int64_t width, std::int64_t cx, std::int64_t cy,
                       std::int64_t rx, std::int64_t ry);

Sample gen_sample(const SynthSpec& s);

// A varied, valid spec for item `index` of a suite; deterministic in
// (seed, index). `max_offset` bounds |cup_dx| and |cup_dy|.
SynthSpec random_spec(std::uint64_t seed, std::uint64_t index, const InputSize& size = {},
                      std::int64_t max_offset = 0);

struct Transform {
  bool hflip = false;
  double rotation_deg = 0.0;
  std::int64_t shift_x = 0;
  std::int64_t shift_y = 0;
  double brightness = 1.0;

  bool identity() const noexcept {
    return !hflip && rotation_deg == 0.0 && shift_x == 0 && shift_y == 0 && brightness == 1.0;
  }
  friend bool operator==(const Transform&, const Transform&) = default;
};

inline constexpr double kMaxRotationDeg = 15.0;
inline constexpr std::int64_t kMaxShift = 10;
inline constexpr double kMaxBrightnessDelta = 0.10;

// Nearest-neighbour resampling about the image centre; pixels mapped from
// outside the source become 0 in the image and the masks. Image and masks
// receive the same geometric transform; brightness touches only the image.
Sample apply_transform(const Sample& in, const Transform& t);

Transform random_transform(std::uint64_t seed, std::uint64_t index);

struct Variant {
  Sample sample;
  Transform transform;
};

// `count` variants of one sample. The first variant is the untouched input;
// the rest use random transforms derived from (seed, variant index).
std::vector<Variant> augment(const Sample& in, std::int64_t count, std::uint64_t seed);

// Per-source variant counts reaching `total` exactly; the remainder of
// total / sources goes one each to the leading sources.
std::vector<std::int64_t> plan_augmentation(std::int64_t sources, std::int64_t total);

struct Split {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> test;
};

// Shuffled partition of item indices [0, n). |train| = round(n * fraction).
Split split(std::int64_t n, double train_fraction = 0.75, std::uint64_t seed = 0);

struct ManifestItem {
  std::string id;
  std::string image;
  std::string disc_mask;
  std::string cup_mask;
  std::int64_t source = 0;
  std::string subset;  // "train" or "test"
  SynthSpec spec;
  Transform transform;
  SampleTruth truth;
};

struct DatasetManifest {
  std::string name;
  std::int64_t source_count = 0;
  std::int64_t total_count = 0;
  std::int64_t train_count = 0;
  std::int64_t test_count = 0;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> variants_per_source;
  std::vector<ManifestItem> items;

  void validate() const;
};

nlohmann::ordered_json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

inline constexpr std::string_view kManifestFile = "manifest.json";

struct SynthOptions {
  std::string name = "synthetic";
  std::int64_t sources = 8;
  // Images after augmentation; 0 keeps one image per source.
  std::int64_t total = 0;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  InputSize size{};
  std::int64_t max_offset = 4;
};

// Generates sources, augments them to `total`, splits, and writes
// <id>.ppm, <id>_disc.pgm, <id>_cup.pgm and manifest.json into `dir`.
DatasetManifest write_dataset(const std::filesystem::path& dir, const SynthOptions& opt);
DatasetManifest read_manifest(const std::filesystem::path& dir);

// Images of a dataset directory: the manifest order when a manifest is
// present, otherwise every *.ppm in name order.
std::vector<std::filesystem::path> dataset_images(const std::filesystem::path& dir);

}  // namespace uedge
