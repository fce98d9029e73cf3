#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "uedge/datagen.hpp"
#include "uedge/image_io.hpp"
#include "uedge/metrics.hpp"

using namespace uedge;
namespace fs = std::filesystem;

namespace {

bool binary(const Mask& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v <= 1; });
}

bool subset_of(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

Mask flip(const Mask& m) {
  Mask out(m.height, m.width);
  for (std::int64_t y = 0; y < m.height; ++y)
    for (std::int64_t x = 0; x < m.width; ++x) out.at(y, m.width - 1 - x) = m.at(y, x);
  return out;
}

TEST(RasterizeEllipse, MatchesRealEquation) {
  std::mt19937_64 rng(90);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int i = 0; i < 100; ++i) {
    const std::int64_t cx = pick(0, 40), cy = pick(0, 40), rx = pick(1, 20), ry = pick(1, 20);
    const Mask m = rasterize_ellipse(40, 48, cx, cy, rx, ry);
    for (std::int64_t y = 0; y < 40; ++y)
      for (std::int64_t x = 0; x < 48; ++x) {
        const double u = static_cast<double>(x - cx) / static_cast<double>(rx);
        const double v = static_cast<double>(y - cy) / static_cast<double>(ry);
        // Skip pixels within rounding distance of the boundary.
        if (std::fabs(u * u + v * v - 1.0) < 1e-9) continue;
        ASSERT_EQ(m.at(y, x) == 1, u * u + v * v < 1.0) << cx << "," << cy << " " << rx << "x" << ry;
      }
  }
  EXPECT_THROW(rasterize_ellipse(8, 8, 4, 4, 0, 2), Error);
}

TEST(GenSample, TruthCdrFromRadii) {
  SynthSpec s;
  s.cup_rx = 22;
  s.cup_ry = 20;
  s.disc_ry = 40;
  const Sample smp = gen_sample(s);
  EXPECT_DOUBLE_EQ(smp.truth.cdr, 41.0 / 81.0);
  EXPECT_DOUBLE_EQ(cdr(smp.cup, smp.disc), 41.0 / 81.0);
  EXPECT_EQ(smp.truth.disc_pixels, smp.disc.count());
  EXPECT_EQ(smp.truth.cup_pixels, smp.cup.count());
}

TEST(GenSample, MeasuredCdrMatchesTruthOnRandomSpecs) {
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Sample smp = gen_sample(random_spec(7, i, {}, 4));
    EXPECT_NEAR(cdr(smp.cup, smp.disc), smp.truth.cdr, 0.03) << i;
    EXPECT_TRUE(subset_of(smp.cup, smp.disc)) << i;
    EXPECT_TRUE(binary(smp.cup) && binary(smp.disc));
  }
}

TEST(GenSample, ImageIsOnTheEightBitGrid) {
  const Sample smp = gen_sample(random_spec(3, 0));
  EXPECT_EQ(smp.image.shape(), (Shape{1, 128, 128, 3}));
  for (float v : smp.image.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    ASSERT_FLOAT_EQ(v * 255.0f, std::round(v * 255.0f));
  }
}

TEST(GenSample, DiscAndCupAreBrighterThanSurroundings) {
  SynthSpec s;
  s.noise = 0.0;
  const Sample smp = gen_sample(s);
  const auto mean_in = [&](const Mask& m, bool inside) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t y = 0; y < 128; ++y)
      for (std::int64_t x = 0; x < 128; ++x)
        if ((m.at(y, x) == 1) == inside) {
          for (std::int64_t c = 0; c < 3; ++c) sum += smp.image.at(0, y, x, c);
          ++n;
        }
    return sum / static_cast<double>(n);
  };
  EXPECT_GT(mean_in(smp.disc, true), mean_in(smp.disc, false));
  EXPECT_GT(mean_in(smp.cup, true), mean_in(smp.disc, true));
}

TEST(GenSample, DeterministicPerSeed) {
  SynthSpec s = random_spec(11, 2);
  EXPECT_EQ(gen_sample(s).image, gen_sample(s).image);
  s.noise = 0.0;
  EXPECT_EQ(gen_sample(s).image, gen_sample(s).image);
  SynthSpec other = random_spec(11, 2);
  other.seed += 1;
  EXPECT_NE(gen_sample(random_spec(11, 2)).image, gen_sample(other).image);
}

TEST(GenSample, UpwardCupGivesThinnerSuperiorRim) {
  SynthSpec s;
  s.cup_dy = 5;
  const Sample smp = gen_sample(s);
  const RimProfile p = rim_profile(smp.cup, smp.disc, s.laterality);
  EXPECT_LT(p.superior, p.inferior);
  s.cup_dy = -5;
  const Sample down = gen_sample(s);
  const RimProfile q = rim_profile(down.cup, down.disc, s.laterality);
  EXPECT_GT(q.superior, q.inferior);
}

TEST(SynthSpecValidation, RejectsBadGeometry) {
  const auto rejects = [](SynthSpec s) {
    try {
      s.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::argument;
    }
    return false;
  };
  SynthSpec outside;
  outside.cup_dy = 30;
  EXPECT_TRUE(rejects(outside));
  SynthSpec touching;
  touching.cup_ry = 40;
  EXPECT_TRUE(rejects(touching));
  SynthSpec odd;
  odd.size = {100, 128, 3};
  EXPECT_TRUE(rejects(odd));
  SynthSpec off;
  off.disc_cx = 10;
  EXPECT_TRUE(rejects(off));
  SynthSpec gray;
  gray.size.channels = 1;
  EXPECT_TRUE(rejects(gray));
  EXPECT_FALSE(rejects(SynthSpec{}));
  EXPECT_THROW(gen_sample(outside), Error);
}

TEST(RandomSpec, ValidAndDeterministic) {
  for (std::uint64_t i = 0; i < 50; ++i) {
    const SynthSpec a = random_spec(5, i, {64, 96, 3}, 3);
    EXPECT_NO_THROW(a.validate());
    EXPECT_LE(std::abs(a.cup_dx), 3);
    EXPECT_LE(std::abs(a.cup_dy), 3);
    const SynthSpec b = random_spec(5, i, {64, 96, 3}, 3);
    EXPECT_EQ(gen_sample(a).image, gen_sample(b).image);
  }
}

TEST(Augment, SingleVariantIsTheInput) {
  const Sample smp = gen_sample(random_spec(1, 0));
  const auto v = augment(smp, 1, 42);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(v[0].transform.identity());
  EXPECT_EQ(v[0].sample.image, smp.image);
  EXPECT_EQ(v[0].sample.disc, smp.disc);
  EXPECT_EQ(v[0].sample.cup, smp.cup);
  const Sample same = apply_transform(smp, Transform{});
  EXPECT_EQ(same.image, smp.image);
  EXPECT_THROW(augment(smp, 0, 1), Error);
}

TEST(Augment, VariantsAreBoundedDeterministicAndBinary) {
  const Sample smp = gen_sample(random_spec(2, 0));
  const auto a = augment(smp, 12, 9);
  const auto b = augment(smp, 12, 9);
  ASSERT_EQ(a.size(), 12u);
  int changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Transform& t = a[i].transform;
    EXPECT_EQ(t, b[i].transform);
    EXPECT_EQ(a[i].sample.image, b[i].sample.image);
    EXPECT_LE(std::fabs(t.rotation_deg), kMaxRotationDeg);
    EXPECT_LE(std::abs(t.shift_x), kMaxShift);
    EXPECT_LE(std::abs(t.shift_y), kMaxShift);
    EXPECT_LE(std::fabs(t.brightness - 1.0), kMaxBrightnessDelta + 1e-12);
    EXPECT_TRUE(binary(a[i].sample.disc) && binary(a[i].sample.cup));
    EXPECT_EQ(a[i].sample.disc.height, 128);
    for (float v : a[i].sample.image.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    changed += t.identity() ? 0 : 1;
  }
  EXPECT_GE(changed, 10);
}

TEST(Augment, FlipTwiceRestoresMasks) {
  const Sample smp = gen_sample(random_spec(3, 1));
  Transform t;
  t.hflip = true;
  const Sample once = apply_transform(smp, t);
  EXPECT_EQ(once.disc, flip(smp.disc));
  EXPECT_EQ(once.cup, flip(smp.cup));
  const Sample twice = apply_transform(once, t);
  EXPECT_EQ(twice.disc, smp.disc);
  EXPECT_EQ(twice.cup, smp.cup);
  EXPECT_EQ(twice.image, smp.image);
}

TEST(Augment, ShiftMovesImageAndMasksTogether) {
  const Sample smp = gen_sample(random_spec(4, 0));
  Transform t;
  t.shift_x = 7;
  t.shift_y = -3;
  t.brightness = 1.05;
  const Sample out = apply_transform(smp, t);
  for (std::int64_t y = 3; y < 125; ++y)
    for (std::int64_t x = 7; x < 128; ++x) {
      ASSERT_EQ(out.disc.at(y - 3, x), smp.disc.at(y, x - 7));
      ASSERT_EQ(out.cup.at(y - 3, x), smp.cup.at(y, x - 7));
    }
  EXPECT_EQ(out.disc.at(10, 2), 0);
}

TEST(PlanAugmentation, ReachesPublishedTotals) {
  const auto drishti = plan_augmentation(101, 2380);
  ASSERT_EQ(drishti.size(), 101u);
  EXPECT_EQ(std::accumulate(drishti.begin(), drishti.end(), std::int64_t{0}), 2380);
  EXPECT_EQ(std::count(drishti.begin(), drishti.end(), 24), 57);
  EXPECT_EQ(std::count(drishti.begin(), drishti.end(), 23), 44);
  EXPECT_TRUE(std::is_sorted(drishti.rbegin(), drishti.rend()));
  const auto rim = plan_augmentation(159, 6980);
  EXPECT_EQ(std::accumulate(rim.begin(), rim.end(), std::int64_t{0}), 6980);
  EXPECT_EQ(plan_augmentation(4, 4), (std::vector<std::int64_t>{1, 1, 1, 1}));
  EXPECT_THROW(plan_augmentation(5, 4), Error);
  EXPECT_THROW(plan_augmentation(0, 4), Error);
}

TEST(Split, PublishedCounts) {
  const Split a = split(2380, 0.75, 1);
  EXPECT_EQ(a.train.size(), 1785u);
  EXPECT_EQ(a.test.size(), 595u);
  const Split b = split(6980, 0.75, 1);
  EXPECT_EQ(b.train.size(), 5235u);
  EXPECT_EQ(b.test.size(), 1745u);
  const Split c = split(4, 0.75, 1);
  EXPECT_EQ(c.train.size(), 3u);
  EXPECT_EQ(c.test.size(), 1u);
}

TEST(Split, PartitionReproducibleFromSeed) {
  std::mt19937_64 rng(91);
  for (int i = 0; i < 100; ++i) {
    const auto n = std::uniform_int_distribution<std::int64_t>(0, 300)(rng);
    const double f = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const std::uint64_t seed = rng();
    const Split s = split(n, f, seed);
    std::set<std::int64_t> all(s.train.begin(), s.train.end());
    for (auto t : s.test) EXPECT_TRUE(all.insert(t).second) << "index in both subsets";
    EXPECT_EQ(static_cast<std::int64_t>(all.size()), n);
    if (n > 0) {
      EXPECT_EQ(*all.begin(), 0);
      EXPECT_EQ(*all.rbegin(), n - 1);
    }
    EXPECT_LE(std::fabs(static_cast<double>(s.train.size()) - f * static_cast<double>(n)), 1.0);
    const Split again = split(n, f, seed);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.test, s.test);
  }
  EXPECT_NE(split(100, 0.75, 1).train, split(100, 0.75, 2).train);
  for (double f : {0.0, 1.0, -0.5, 1.5}) EXPECT_THROW(split(10, f, 0), Error);
}

TEST(Manifest, WrittenDatasetReadsBack) {
  const fs::path dir = fs::path(UEDGE_TEST_TMP) / "datagen_ds";
  fs::remove_all(dir);
  SynthOptions opt;
  opt.name = "tiny";
  opt.sources = 3;
  opt.total = 7;
  opt.seed = 5;
  opt.size = {64, 64, 3};
  const DatasetManifest m = write_dataset(dir, opt);
  EXPECT_EQ(m.total_count, 7);
  EXPECT_EQ(m.train_count + m.test_count, 7);
  EXPECT_EQ(m.train_count, 5);
  EXPECT_EQ(m.variants_per_source, (std::vector<std::int64_t>{3, 2, 2}));
  const DatasetManifest back = read_manifest(dir);
  EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
  const auto images = dataset_images(dir);
  ASSERT_EQ(images.size(), 7u);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ManifestItem& item = m.items[i];
    EXPECT_EQ(images[i].filename(), item.image);
    const Mask disc = read_mask(dir / item.disc_mask);
    const Mask cup = read_mask(dir / item.cup_mask);
    EXPECT_EQ(disc.count(), item.truth.disc_pixels);
    EXPECT_TRUE(subset_of(cup, disc));
    EXPECT_EQ(read_image(images[i]).shape(), (Shape{1, 64, 64, 3}));
  }
  // The first variant of every source is the untouched generator output.
  EXPECT_EQ(read_image(dir / m.items[0].image), gen_sample(m.items[0].spec).image);
}

TEST(Manifest, ValidationCatchesInconsistentCounts) {
  const fs::path dir = fs::path(UEDGE_TEST_TMP) / "datagen_bad";
  fs::remove_all(dir);
  SynthOptions opt;
  opt.sources = 2;
  opt.size = {32, 32, 3};
  DatasetManifest m = write_dataset(dir, opt);
  EXPECT_NO_THROW(m.validate());
  m.test_count += 1;
  EXPECT_THROW(m.validate(), Error);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"name": 3})")), Error);
}

TEST(DatasetImages, FallsBackToSortedPpmFiles) {
  const fs::path dir = fs::path(UEDGE_TEST_TMP) / "datagen_plain";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Tensor img({1, 32, 32, 3});
  for (const char* name : {"b.ppm", "a.ppm", "c.ppm"}) write_image(dir / name, img);
  write_mask(dir / "a_disc.pgm", Mask(32, 32));
  const auto images = dataset_images(dir);
  ASSERT_EQ(images.size(), 3u);
  EXPECT_EQ(images[0].filename(), "a.ppm");
  EXPECT_EQ(images[2].filename(), "c.ppm");
  EXPECT_THROW(dataset_images(dir / "missing"), Error);
}

}  // namespace
