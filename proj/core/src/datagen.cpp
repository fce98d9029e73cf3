#include "uedge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "uedge/error.hpp"
#include "uedge/image_io.hpp"

namespace uedge {

namespace {

// Independent stream per (seed, index, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), purpose};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kSpecStream = 1;
constexpr std::uint32_t kTextureStream = 2;
constexpr std::uint32_t kTransformStream = 3;
constexpr std::uint32_t kSplitStream = 4;
constexpr std::uint32_t kAugmentStream = 5;

float to_level(float v) { return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f; }

std::int64_t count_set(const Mask& m) { return std::count(m.data.begin(), m.data.end(), std::uint8_t{1}); }

}  // namespace

Mask rasterize_ellipse(std::int64_t height, std::int64_t width, std::int64_t cx, std::int64_t cy,
                       std::int64_t rx, std::int64_t ry) {
  if (rx <= 0 || ry <= 0) throw Error(ErrorKind::argument, "ellipse radii must be positive");
  Mask m(height, width);
  // Integer form of the inequality avoids rounding at the boundary.
  const std::int64_t rx2 = rx * rx, ry2 = ry * ry;
  for (std::int64_t y = 0; y < height; ++y) {
    const std::int64_t dy = y - cy;
    for (std::int64_t x = 0; x < width; ++x) {
      const std::int64_t dx = x - cx;
      m.at(y, x) = dx * dx * ry2 + dy * dy * rx2 <= rx2 * ry2 ? 1 : 0;
    }
  }
  return m;
}

void SynthSpec::validate() const {
  if (size.height <= 0 || size.width <= 0 || size.height % 32 != 0 || size.width % 32 != 0) {
    throw Error(ErrorKind::argument, "synthetic image size must be a positive multiple of 32");
  }
  if (size.channels != 3) throw Error(ErrorKind::argument, "synthetic images have 3 channels");
  if (disc_rx <= 0 || disc_ry <= 0 || cup_rx <= 0 || cup_ry <= 0) {
    throw Error(ErrorKind::argument, "ellipse radii must be positive");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(ErrorKind::argument, "noise must be >= 0");
  if (disc_cx - disc_rx < 0 || disc_cx + disc_rx >= size.width || disc_cy - disc_ry < 0 ||
      disc_cy + disc_ry >= size.height) {
    throw Error(ErrorKind::argument, "disc does not fit inside the image");
  }
  const Mask disc = rasterize_ellipse(size.height, size.width, disc_cx, disc_cy, disc_rx, disc_ry);
  const Mask cup =
      rasterize_ellipse(size.height, size.width, disc_cx + cup_dx, disc_cy - cup_dy, cup_rx, cup_ry);
  // Strictly inside: every cup pixel and its 4-neighbours lie in the disc.
  for (std::int64_t y = 0; y < size.height; ++y) {
    for (std::int64_t x = 0; x < size.width; ++x) {
      if (!cup.at(y, x)) continue;
      const bool inside = y > 0 && x > 0 && y + 1 < size.height && x + 1 < size.width && disc.at(y, x) &&
                          disc.at(y - 1, x) && disc.at(y + 1, x) && disc.at(y, x - 1) && disc.at(y, x + 1);
      if (!inside) throw Error(ErrorKind::argument, "cup ellipse is not strictly inside the disc");
    }
  }
}

Sample gen_sample(const SynthSpec& s) {
  s.validate();
  const std::int64_t h = s.size.height, w = s.size.width;
  Sample out;
  out.disc = rasterize_ellipse(h, w, s.disc_cx, s.disc_cy, s.disc_rx, s.disc_ry);
  out.cup = rasterize_ellipse(h, w, s.disc_cx + s.cup_dx, s.disc_cy - s.cup_dy, s.cup_rx, s.cup_ry);
  out.truth.cdr = static_cast<double>(2 * s.cup_ry + 1) / static_cast<double>(2 * s.disc_ry + 1);
  out.truth.disc_pixels = count_set(out.disc);
  out.truth.cup_pixels = count_set(out.cup);

  auto rng = stream(s.seed, 0, kTextureStream);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng);
  std::normal_distribution<float> grain(0.0f, static_cast<float>(s.noise));

  constexpr float background[3] = {0.42f, 0.16f, 0.07f};
  constexpr float disc_rgb[3] = {0.86f, 0.56f, 0.30f};
  constexpr float cup_rgb[3] = {0.98f, 0.86f, 0.62f};
  out.image = Tensor({1, h, w, 3});
  auto d = out.image.data();
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double ry = (static_cast<double>(y) - cy) / cy, rx = (static_cast<double>(x) - cx) / cx;
      const float vignette = static_cast<float>(1.0 - 0.35 * (rx * rx + ry * ry));
      const float texture =
          static_cast<float>(0.05 * std::sin(0.31 * static_cast<double>(x) + p1) *
                             std::sin(0.23 * static_cast<double>(y) + p2));
      const float* base = out.cup.at(y, x) ? cup_rgb : out.disc.at(y, x) ? disc_rgb : background;
      const float shade = out.disc.at(y, x) ? 1.0f : vignette;
      for (int c = 0; c < 3; ++c) {
        const float v = base[c] * shade + texture + (s.noise > 0.0 ? grain(rng) : 0.0f);
        d[static_cast<std::size_t>((y * w + x) * 3 + c)] = to_level(v);
      }
    }
  }
  return out;
}

SynthSpec random_spec(std::uint64_t seed, std::uint64_t index, const InputSize& size,
                      std::int64_t max_offset) {
  auto rng = stream(seed, index, kSpecStream);
  const std::int64_t minor = std::min(size.height, size.width);
  auto uniform_int = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SynthSpec s;
    s.seed = seed ^ (index * 0x9E3779B97F4A7C15ull);
    s.size = size;
    s.disc_ry = uniform_int(minor / 4, minor * 34 / 100);
    s.disc_rx = std::max<std::int64_t>(2, std::lround(static_cast<double>(s.disc_ry) * uniform(0.85, 0.97)));
    const std::int64_t jitter = std::max<std::int64_t>(0, minor / 16);
    s.disc_cx = size.width / 2 + uniform_int(-jitter, jitter);
    s.disc_cy = size.height / 2 + uniform_int(-jitter, jitter);
    const double ratio = uniform(0.25, 0.75);
    s.cup_ry = std::max<std::int64_t>(2, std::lround(ratio * static_cast<double>(s.disc_ry)));
    s.cup_rx = std::max<std::int64_t>(2, std::lround(static_cast<double>(s.cup_ry) * uniform(1.0, 1.25)));
    s.cup_dx = max_offset > 0 ? uniform_int(-max_offset, max_offset) : 0;
    s.cup_dy = max_offset > 0 ? uniform_int(-max_offset, max_offset) : 0;
    s.noise = uniform(0.0, 0.04);
    s.laterality = uniform_int(0, 1) == 0 ? Laterality::left : Laterality::right;
    try {
      s.validate();
      return s;
    } catch (const Error&) {
      continue;
    }
  }
  throw Error(ErrorKind::argument, "could not draw a valid synthetic spec for this image size");
}

Sample apply_transform(const Sample& in, const Transform& t) {
  if (t.identity()) return in;
  const Shape& sh = in.image.shape();
  if (sh.n != 1 || sh.c != 3 || in.disc.height != sh.h || in.disc.width != sh.w || in.cup.height != sh.h ||
      in.cup.width != sh.w) {
    throw_shape("apply_transform: image and masks must share one (1, H, W, 3) geometry");
  }
  const std::int64_t h = sh.h, w = sh.w;
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);

  Sample out;
  out.truth = in.truth;
  out.image = Tensor(sh);
  out.disc = Mask(h, w);
  out.cup = Mask(h, w);
  const auto src = in.image.data();
  auto dst = out.image.data();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      // Inverse map: undo shift, then rotation, then flip.
      const double u = static_cast<double>(x - t.shift_x) - cx;
      const double v = static_cast<double>(y - t.shift_y) - cy;
      std::int64_t sx = std::lround(cs * u + sn * v + cx);
      const std::int64_t sy = std::lround(-sn * u + cs * v + cy);
      if (t.hflip) sx = w - 1 - sx;
      if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
      out.disc.at(y, x) = in.disc.at(sy, sx);
      out.cup.at(y, x) = in.cup.at(sy, sx);
      for (int c = 0; c < 3; ++c) {
        const float p = src[static_cast<std::size_t>((sy * w + sx) * 3 + c)];
        dst[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            to_level(static_cast<float>(static_cast<double>(p) * t.brightness));
      }
    }
  }
  out.truth.disc_pixels = count_set(out.disc);
  out.truth.cup_pixels = count_set(out.cup);
  return out;
}

Transform random_transform(std::uint64_t seed, std::uint64_t index) {
  auto rng = stream(seed, index, kTransformStream);
  Transform t;
  t.hflip = std::bernoulli_distribution(0.5)(rng);
  t.rotation_deg = std::uniform_real_distribution<double>(-kMaxRotationDeg, kMaxRotationDeg)(rng);
  t.shift_x = std::uniform_int_distribution<std::int64_t>(-kMaxShift, kMaxShift)(rng);
  t.shift_y = std::uniform_int_distribution<std::int64_t>(-kMaxShift, kMaxShift)(rng);
  t.brightness =
      std::uniform_real_distribution<double>(1.0 - kMaxBrightnessDelta, 1.0 + kMaxBrightnessDelta)(rng);
  return t;
}

std::vector<Variant> augment(const Sample& in, std::int64_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::argument, "augment: count must be >= 1");
  std::vector<Variant> out;
  out.reserve(static_cast<std::size_t>(count));
  out.push_back({in, Transform{}});
  for (std::int64_t i = 1; i < count; ++i) {
    const Transform t = random_transform(seed, static_cast<std::uint64_t>(i));
    out.push_back({apply_transform(in, t), t});
  }
  return out;
}

std::vector<std::int64_t> plan_augmentation(std::int64_t sources, std::int64_t total) {
  if (sources < 1) throw Error(ErrorKind::argument, "plan_augmentation: need at least one source");
  if (total < sources) throw Error(ErrorKind::argument, "plan_augmentation: total below source count");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(sources), total / sources);
  for (std::int64_t i = 0; i < total % sources; ++i) ++counts[static_cast<std::size_t>(i)];
  return counts;
}

Split split(std::int64_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::argument, "split: train fraction must lie in (0, 1)");
  }
  if (n < 0) throw Error(ErrorKind::argument, "split: negative item count");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = stream(seed, 0, kSplitStream);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void DatasetManifest::validate() const {
  if (train_count + test_count != total_count) {
    throw Error(ErrorKind::format, "manifest: train + test does not equal total");
  }
  if (static_cast<std::int64_t>(items.size()) != total_count) {
    throw Error(ErrorKind::format, "manifest: item count does not equal total");
  }
  if (std::abs(static_cast<double>(train_count) - train_fraction * static_cast<double>(total_count)) > 1.0) {
    throw Error(ErrorKind::format, "manifest: split fraction not honored");
  }
  if (std::accumulate(variants_per_source.begin(), variants_per_source.end(), std::int64_t{0}) != total_count ||
      static_cast<std::int64_t>(variants_per_source.size()) != source_count) {
    throw Error(ErrorKind::format, "manifest: per-source variant counts do not add up");
  }
}

namespace {

nlohmann::ordered_json spec_json(const SynthSpec& s) {
  return {{"seed", s.seed},
          {"size", {s.size.height, s.size.width, s.size.channels}},
          {"disc_center", {s.disc_cx, s.disc_cy}},
          {"disc_radii", {s.disc_rx, s.disc_ry}},
          {"cup_radii", {s.cup_rx, s.cup_ry}},
          {"cup_offset", {s.cup_dx, s.cup_dy}},
          {"noise", s.noise},
          {"laterality", to_string(s.laterality)}};
}

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto size = j.at("size").get<std::vector<std::int64_t>>();
  if (size.size() != 3) throw Error(ErrorKind::format, "manifest: size needs 3 entries");
  s.size = {size[0], size[1], size[2]};
  auto pair = [&](const char* key, std::int64_t& a, std::int64_t& b) {
    const auto v = j.at(key).get<std::vector<std::int64_t>>();
    if (v.size() != 2) throw Error(ErrorKind::format, std::string("manifest: ") + key + " needs 2 entries");
    a = v[0];
    b = v[1];
  };
  pair("disc_center", s.disc_cx, s.disc_cy);
  pair("disc_radii", s.disc_rx, s.disc_ry);
  pair("cup_radii", s.cup_rx, s.cup_ry);
  pair("cup_offset", s.cup_dx, s.cup_dy);
  s.noise = j.at("noise").get<double>();
  s.laterality = parse_laterality(j.at("laterality").get<std::string>());
  return s;
}

}  // namespace

nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["source_count"] = m.source_count;
  j["total_count"] = m.total_count;
  j["train_count"] = m.train_count;
  j["test_count"] = m.test_count;
  j["train_fraction"] = m.train_fraction;
  j["seed"] = m.seed;
  j["variants_per_source"] = m.variants_per_source;
  auto& items = j["items"] = nlohmann::ordered_json::array();
  for (const ManifestItem& it : m.items) {
    items.push_back({{"id", it.id},
                     {"image", it.image},
                     {"disc_mask", it.disc_mask},
                     {"cup_mask", it.cup_mask},
                     {"source", it.source},
                     {"subset", it.subset},
                     {"spec", spec_json(it.spec)},
                     {"transform",
                      {{"hflip", it.transform.hflip},
                       {"rotation_deg", it.transform.rotation_deg},
                       {"shift", {it.transform.shift_x, it.transform.shift_y}},
                       {"brightness", it.transform.brightness}}},
                     {"truth",
                      {{"cdr", it.truth.cdr},
                       {"disc_pixels", it.truth.disc_pixels},
                       {"cup_pixels", it.truth.cup_pixels}}}});
  }
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.source_count = j.at("source_count").get<std::int64_t>();
    m.total_count = j.at("total_count").get<std::int64_t>();
    m.train_count = j.at("train_count").get<std::int64_t>();
    m.test_count = j.at("test_count").get<std::int64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.variants_per_source = j.at("variants_per_source").get<std::vector<std::int64_t>>();
    for (const auto& ji : j.at("items")) {
      ManifestItem it;
      it.id = ji.at("id").get<std::string>();
      it.image = ji.at("image").get<std::string>();
      it.disc_mask = ji.at("disc_mask").get<std::string>();
      it.cup_mask = ji.at("cup_mask").get<std::string>();
      it.source = ji.at("source").get<std::int64_t>();
      it.subset = ji.at("subset").get<std::string>();
      it.spec = spec_from_json(ji.at("spec"));
      const auto& jt = ji.at("transform");
      it.transform.hflip = jt.at("hflip").get<bool>();
      it.transform.rotation_deg = jt.at("rotation_deg").get<double>();
      const auto shift = jt.at("shift").get<std::vector<std::int64_t>>();
      if (shift.size() != 2) throw Error(ErrorKind::format, "manifest: shift needs 2 entries");
      it.transform.shift_x = shift[0];
      it.transform.shift_y = shift[1];
      it.transform.brightness = jt.at("brightness").get<double>();
      const auto& jtr = ji.at("truth");
      it.truth.cdr = jtr.at("cdr").get<double>();
      it.truth.disc_pixels = jtr.at("disc_pixels").get<std::int64_t>();
      it.truth.cup_pixels = jtr.at("cup_pixels").get<std::int64_t>();
      m.items.push_back(std::move(it));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("manifest: ") + e.what());
  }
}

DatasetManifest write_dataset(const std::filesystem::path& dir, const SynthOptions& opt) {
  if (opt.sources < 1) throw Error(ErrorKind::argument, "synth: need at least one source image");
  const std::int64_t total = opt.total == 0 ? opt.sources : opt.total;
  DatasetManifest m;
  m.name = opt.name;
  m.source_count = opt.sources;
  m.total_count = total;
  m.train_fraction = opt.train_fraction;
  m.seed = opt.seed;
  m.variants_per_source = plan_augmentation(opt.sources, total);
  const Split parts = split(total, opt.train_fraction, opt.seed);
  m.train_count = static_cast<std::int64_t>(parts.train.size());
  m.test_count = static_cast<std::int64_t>(parts.test.size());

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());

  std::vector<bool> is_train(static_cast<std::size_t>(total), false);
  for (auto i : parts.train) is_train[static_cast<std::size_t>(i)] = true;

  for (std::int64_t s = 0; s < opt.sources; ++s) {
    const SynthSpec spec = random_spec(opt.seed, static_cast<std::uint64_t>(s), opt.size, opt.max_offset);
    const Sample base = gen_sample(spec);
    const std::uint64_t aug_seed = stream(opt.seed, static_cast<std::uint64_t>(s), kAugmentStream)();
    const auto variants = augment(base, m.variants_per_source[static_cast<std::size_t>(s)], aug_seed);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      char id[48];
      std::snprintf(id, sizeof id, "s%04lld_v%03zu", static_cast<long long>(s), v);
      ManifestItem it;
      it.id = id;
      it.image = it.id + ".ppm";
      it.disc_mask = it.id + "_disc.pgm";
      it.cup_mask = it.id + "_cup.pgm";
      it.source = s;
      it.subset = is_train[m.items.size()] ? "train" : "test";
      it.spec = spec;
      it.transform = variants[v].transform;
      it.truth = variants[v].sample.truth;
      write_image(dir / it.image, variants[v].sample.image);
      write_mask(dir / it.disc_mask, variants[v].sample.disc);
      write_mask(dir / it.cup_mask, variants[v].sample.cup);
      m.items.push_back(std::move(it));
    }
  }
  m.validate();
  std::ofstream out(dir / kManifestFile);
  if (!out) throw Error(ErrorKind::io, "cannot write manifest in '" + dir.string() + "'");
  out << to_json(m).dump(2) << '\n';
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw Error(ErrorKind::io, "cannot open manifest in '" + dir.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

std::vector<std::filesystem::path> dataset_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::io, "'" + dir.string() + "' is not a directory");
  }
  std::vector<std::filesystem::path> out;
  if (std::filesystem::exists(dir / kManifestFile)) {
    for (const ManifestItem& it : read_manifest(dir).items) out.push_back(dir / it.image);
    return out;
  }
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace uedge
