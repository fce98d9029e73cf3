#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "uedge/engine.hpp"
#include "uedge/unet.hpp"

using namespace uedge;

namespace {

// Independent count from the block definition: 3x3 convs with bias (and
// two affine norm scalars per channel), 2x2 transposed convs with bias, a
// 1x1 head.
std::int64_t block_count(const ModelSpec& s) {
  std::vector<std::int64_t> w;
  for (int l = 0; l < s.levels; ++l) {
    w.push_back(static_cast<std::int64_t>(std::floor(s.base_filters * std::pow(s.increment_ratio, l) + 0.5 + 1e-9)));
  }
  const std::int64_t norm = s.use_norm ? 2 : 0;
  auto conv = [&](std::int64_t ci, std::int64_t co) { return 9 * ci * co + co + norm * co; };
  std::int64_t total = 0;
  std::int64_t prev = s.input.channels;
  for (int l = 0; l < s.levels; ++l) {
    total += conv(prev, w[l]) + conv(w[l], w[l]);
    prev = w[l];
  }
  for (int l = s.levels - 2; l >= 0; --l) {
    total += 4 * w[l + 1] * w[l] + w[l];
    total += conv(2 * w[l], w[l]) + conv(w[l], w[l]);
  }
  return total + w[0] + 1;
}

TEST(ChannelWidths, PaperFamilies) {
  EXPECT_EQ(channel_widths(parse_spec("6/64/Y/1.1")), (std::vector<std::int64_t>{64, 70, 77, 85, 94, 103}));
  EXPECT_EQ(channel_widths(parse_spec("5/64/Y/2.0")), (std::vector<std::int64_t>{64, 128, 256, 512, 1024}));
  EXPECT_EQ(channel_widths(parse_spec("4/7/N/1.0")), (std::vector<std::int64_t>{7, 7, 7, 7}));
}

TEST(ChannelWidths, NonDecreasingForRandomSpecs) {
  oracle::Gen g(1);
  for (int i = 0; i < 200; ++i) {
    ModelSpec s;
    s.levels = static_cast<int>(g.integer(2, 7));
    s.base_filters = static_cast<int>(g.integer(1, 96));
    s.increment_ratio = 1.0 + g.real(0.0f, 1.5f);
    const auto w = channel_widths(s);
    ASSERT_EQ(static_cast<int>(w.size()), s.levels);
    EXPECT_EQ(w.front(), s.base_filters);
    EXPECT_TRUE(std::is_sorted(w.begin(), w.end()));
  }
}

TEST(SpecString, RoundTrips) {
  for (const char* text : {"6/64/Y/1.1", "6/40/Y/1.1", "2/1/N/1.0", "5/64/Y/2.0", "3/8/N/1.25",
                           "4/16/Y/1.5@64x96x1"}) {
    EXPECT_EQ(to_string(parse_spec(text)), text);
  }
  const ModelSpec s = parse_spec("4/16/Y/1.5@64x96x1");
  EXPECT_EQ(s.input, (InputSize{64, 96, 1}));
}

TEST(SpecString, RejectsMalformedText) {
  for (const char* text : {"", "6/64/Y", "6/64/X/1.1", "1/64/Y/1.1", "6/0/Y/1.1", "6/64/Y/0.9",
                           "6/64/Y/abc", "6/64/Y/1.1@100x100x3", "6//Y/1.1", "6/64/Y/1.1/2"}) {
    try {
      parse_spec(text);
      ADD_FAILURE() << "accepted '" << text << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::spec) << text;
    }
  }
}

TEST(Presets, MapToPaperModels) {
  EXPECT_EQ(to_string(preset("disc")), "6/40/Y/1.1");
  EXPECT_EQ(to_string(preset("thyroid_simple")), "6/40/Y/1.1");
  EXPECT_EQ(to_string(preset("cup")), "6/64/Y/1.1");
  EXPECT_EQ(to_string(preset("thyroid_complex")), "6/64/Y/1.1");
  try {
    preset("xyz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::lookup);
  }
}

TEST(BuildGraph, TwoLevelGraphIsHandEnumerable) {
  const Graph g = build_graph(parse_spec("2/1/N/1.0@4x4x1"));
  std::vector<std::string> names;
  for (const Node& n : g.nodes) names.push_back(n.name);
  EXPECT_EQ(names, (std::vector<std::string>{"enc0_conv1", "enc0_conv2", "enc0_pool", "bott_conv1", "bott_conv2",
                                             "dec0_up", "dec0_concat", "dec0_conv1", "dec0_conv2", "head"}));
  const Node& concat = g.node(g.find("dec0_concat"));
  ASSERT_EQ(concat.inputs.size(), 2u);
  EXPECT_EQ(concat.inputs[0], g.find("enc0_conv2"));
  EXPECT_EQ(concat.inputs[1], g.find("dec0_up"));
  EXPECT_EQ(g.node(g.output).out_shape, (Shape{1, 4, 4, 1}));
}

TEST(BuildGraph, ThreeLevelTopology) {
  const Graph g = build_graph(parse_spec("3/8/Y/2.0@32x32x3"));
  EXPECT_EQ(g.node(g.find("bott_conv2")).out_shape, (Shape{1, 8, 8, 32}));
  EXPECT_EQ(g.node(g.find("dec1_up")).out_shape, (Shape{1, 16, 16, 16}));
  EXPECT_EQ(g.node(g.find("dec0_concat")).out_shape, (Shape{1, 32, 32, 16}));
  EXPECT_EQ(g.node(g.find("enc1_pool")).out_shape, (Shape{1, 8, 8, 16}));
  EXPECT_EQ(g.find("enc2_conv1"), -1);
}

TEST(BuildGraph, ParameterNamesAreUniqueAndOutputIsSingleChannel) {
  for (const char* text : {"6/64/Y/1.1", "6/40/N/1.1", "3/5/Y/1.3@16x8x2"}) {
    const Graph g = build_graph(parse_spec(text));
    std::set<std::string> seen;
    for (const ParamInfo& p : g.all_params()) EXPECT_TRUE(seen.insert(p.name).second) << p.name;
    const Shape out = g.node(g.output).out_shape;
    EXPECT_EQ(out, (Shape{1, g.spec.input.height, g.spec.input.width, 1}));
  }
}

TEST(BuildGraph, IndivisibleInputIsSpecError) {
  ModelSpec s = parse_spec("6/8/Y/1.1");
  s.input = {100, 128, 3};
  try {
    build_graph(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec);
  }
}

TEST(CountParams, HandSumForTwoLevelModel) {
  // enc0 conv x2: 10 + 10; bottleneck x2: 10 + 10; up: 4 + 1; dec conv1 on
  // the 2-channel concat: 18 + 1; dec conv2: 10; head: 1 + 1.
  const ParamCount pc = count_params(parse_spec("2/1/N/1.0@4x4x1"));
  EXPECT_EQ(pc.total, 76);
  EXPECT_EQ(pc.per_layer.at("dec0_conv1"), 19);
  EXPECT_EQ(pc.per_layer.at("dec0_up"), 5);
  EXPECT_EQ(pc.per_layer.at("head"), 2);
}

TEST(CountParams, PaperModelsFrozen) {
  EXPECT_EQ(count_params(parse_spec("6/64/Y/1.1")).total, 1661589);
  EXPECT_EQ(count_params(parse_spec("6/40/Y/1.1")).total, 651368);
  EXPECT_NEAR(count_params(parse_spec("6/40/Y/1.1")).mtp, 0.651368, 1e-12);
}

TEST(CountParams, ClosedFormGraphWalkAndBlockOracleAgree) {
  oracle::Gen g(5);
  for (int i = 0; i < 60; ++i) {
    ModelSpec s;
    s.levels = static_cast<int>(g.integer(2, 6));
    s.base_filters = static_cast<int>(g.integer(1, 48));
    s.increment_ratio = 1.0 + 0.05 * static_cast<double>(g.integer(0, 20));
    s.use_norm = g.coin();
    s.input = {32, 32, g.integer(1, 4)};
    const ParamCount closed = count_params(s);
    const Graph graph = build_graph(s);
    const ParamCount walked = count_params(graph);
    EXPECT_EQ(closed.total, walked.total) << to_string(s);
    EXPECT_EQ(closed.per_layer, walked.per_layer) << to_string(s);
    EXPECT_EQ(closed.total, block_count(s)) << to_string(s);
    std::int64_t sum = 0;
    for (const auto& [name, n] : closed.per_layer) sum += n;
    EXPECT_EQ(sum, closed.total);
    EXPECT_NEAR(closed.mtp, static_cast<double>(closed.total) / 1e6, 1e-6);
  }
}

TEST(CountParams, EqualsTrainableScalarsOfGeneratedWeights) {
  for (const char* text : {"6/64/Y/1.1", "6/40/Y/1.1", "3/6/N/1.2@16x16x3"}) {
    const Graph g = build_graph(parse_spec(text));
    const WeightSet w = generate_random_weights(g, 3);
    EXPECT_EQ(w.trainable_scalar_count(g), count_params(g.spec).total) << text;
  }
  // Without norm layers every stored scalar is trainable.
  const Graph g = build_graph(parse_spec("4/10/N/1.1@32x32x3"));
  EXPECT_EQ(generate_random_weights(g, 1).scalar_count(), count_params(g.spec).total);
}

TEST(CountParams, MonotoneInFiltersRatioAndLevels) {
  const auto total = [](int l, int f, double ir) {
    ModelSpec s;
    s.levels = l;
    s.base_filters = f;
    s.increment_ratio = ir;
    return count_params(s).total;
  };
  for (int f = 1; f < 80; f += 7) EXPECT_LT(total(5, f, 1.1), total(5, f + 1, 1.1));
  for (int k = 0; k < 10; ++k) EXPECT_LE(total(5, 32, 1.0 + 0.1 * k), total(5, 32, 1.1 + 0.1 * k));
  for (int l = 2; l < 7; ++l) EXPECT_LT(total(l, 32, 1.1), total(l + 1, 32, 1.1));
}

TEST(CountParams, PaperRatios) {
  const double big = static_cast<double>(count_params(parse_spec("6/64/Y/1.1")).total);
  const double small = static_cast<double>(count_params(parse_spec("6/40/Y/1.1")).total);
  const double original = static_cast<double>(count_params(parse_spec("6/64/Y/2.0")).total);
  EXPECT_GE(big / small, 2.3);
  EXPECT_LE(big / small, 2.9);
  EXPECT_GT(original / big, 50.0);
}

}  // namespace
