#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "uedge/calibrate.hpp"
#include "uedge/engine.hpp"

using namespace uedge;

namespace {

ConvParams layer(const WeightSet& w, const std::string& name, std::int64_t stride = 1) {
  const ParamTensor& k = w.tensors.at(kernel_name(name));
  ConvParams p{k.dims[0], k.dims[1], k.dims[2], k.dims[3], k.values, w.tensors.at(bias_name(name)).values};
  p.stride = stride;
  return p;
}

// conv -> norm -> relu, written out per element.
Tensor conv_block(const Tensor& x, const WeightSet& w, const std::string& name) {
  Tensor y = oracle::conv2d(x, layer(w, name));
  const auto& g = w.tensors.at(gamma_name(name)).values;
  const auto& b = w.tensors.at(beta_name(name)).values;
  const auto& m = w.tensors.at(mean_name(name)).values;
  const auto& v = w.tensors.at(var_name(name)).values;
  const Shape s = y.shape();
  for (std::int64_t yy = 0; yy < s.h; ++yy)
    for (std::int64_t xx = 0; xx < s.w; ++xx)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const auto i = static_cast<std::size_t>(c);
        const double n = g[i] * (y.at(0, yy, xx, c) - m[i]) / std::sqrt(static_cast<double>(v[i]) + kNormEpsilon) + b[i];
        y.at(0, yy, xx, c) = static_cast<float>(std::max(0.0, n));
      }
  return y;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  const Shape s = a.shape();
  Tensor y({1, s.h, s.w, s.c + b.shape().c});
  for (std::int64_t yy = 0; yy < s.h; ++yy)
    for (std::int64_t xx = 0; xx < s.w; ++xx) {
      for (std::int64_t c = 0; c < s.c; ++c) y.at(0, yy, xx, c) = a.at(0, yy, xx, c);
      for (std::int64_t c = 0; c < b.shape().c; ++c) y.at(0, yy, xx, s.c + c) = b.at(0, yy, xx, c);
    }
  return y;
}

// The two-level network evaluated line by line.
Tensor hand_forward(const WeightSet& w, const Tensor& x) {
  const Tensor e1 = conv_block(x, w, "enc0_conv1");
  const Tensor e2 = conv_block(e1, w, "enc0_conv2");
  const Tensor p = oracle::maxpool2(e2);
  const Tensor b1 = conv_block(p, w, "bott_conv1");
  const Tensor b2 = conv_block(b1, w, "bott_conv2");
  const Tensor u = oracle::upconv2(b2, layer(w, "dec0_up", 2));
  const Tensor d1 = conv_block(concat(e2, u), w, "dec0_conv1");
  const Tensor d2 = conv_block(d1, w, "dec0_conv2");
  Tensor h = oracle::conv2d(d2, layer(w, "head"));
  for (float& v : h.data()) v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  return h;
}

Tensor random_image(const Graph& g, std::uint64_t seed) {
  oracle::Gen gen(seed);
  return gen.tensor(g.input_shape(), 0.0f, 1.0f);
}

WeightSet zero_weights(const Graph& g) {
  WeightSet w = generate_random_weights(g, 1);
  for (auto& [name, t] : w.tensors) std::fill(t.values.begin(), t.values.end(), 0.0f);
  return w;
}

QuantWeightSet calibrated(const Graph& g, const WeightSet& w, const std::vector<Tensor>& images) {
  return quantize_weights(g, w, calibrate(g, w, images));
}

TEST(FloatExecutor, MatchesHandEvaluationOfTwoLevelModel) {
  const Graph g = build_graph(parse_spec("2/3/Y/1.5@4x4x2"));
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const WeightSet w = generate_random_weights(g, seed);
    const Tensor x = random_image(g, seed + 100);
    EXPECT_LE(oracle::max_abs_diff(run_float(g, w, x), hand_forward(w, x)), 1e-5) << "seed " << seed;
  }
}

TEST(FloatExecutor, ZeroWeightsGiveHalfEverywhere) {
  const Graph g = build_graph(parse_spec("3/4/Y/1.1@16x16x3"));
  const Tensor y = run_float(g, zero_weights(g), random_image(g, 3));
  for (float v : y.data()) EXPECT_EQ(v, 0.5f);
}

TEST(FloatExecutor, DeterministicAcrossRunsAndThreadCounts) {
  const Graph g = build_graph(parse_spec("3/6/Y/1.2@32x32x3"));
  const WeightSet w = generate_random_weights(g, 9);
  EXPECT_EQ(w, generate_random_weights(g, 9));
  const Tensor x = random_image(g, 4);
  set_num_threads(1);
  const Tensor a = run_float(g, w, x);
  set_num_threads(3);
  const Tensor b = run_float(g, w, x);
  set_num_threads(0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, run_float(g, w, x));
  EXPECT_EQ(a.shape(), (Shape{1, 32, 32, 1}));
  for (float v : a.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(FloatExecutor, ObserverSeesEveryActivation) {
  const Graph g = build_graph(parse_spec("2/2/N/1.0@8x8x1"));
  std::set<std::string> seen;
  FloatExecutor(g, generate_random_weights(g, 2)).run(random_image(g, 1),
                                                    [&](const std::string& n, const Tensor&) { seen.insert(n); });
  std::set<std::string> want{kInputTensor, kHeadLogits};
  for (const Node& n : g.nodes) want.insert(n.name);
  EXPECT_EQ(seen, want);
}

TEST(FloatExecutor, BindingAndShapeErrors) {
  const Graph g = build_graph(parse_spec("2/2/Y/1.0@8x8x1"));
  const WeightSet good = generate_random_weights(g, 1);
  const auto kind_of = [&](const WeightSet& w) {
    try {
      FloatExecutor e(g, w);
    } catch (const Error& err) {
      return err.kind();
    }
    return ErrorKind::io;  // sentinel: nothing thrown
  };
  WeightSet missing = good;
  missing.tensors.erase("dec0_up.bias");
  EXPECT_EQ(kind_of(missing), ErrorKind::binding);
  WeightSet extra = good;
  extra.tensors["stray.kernel"] = {{1}, {0.0f}};
  EXPECT_EQ(kind_of(extra), ErrorKind::binding);
  WeightSet wrong = good;
  wrong.tensors["head.kernel"] = {{1, 1, 3, 1}, {0.0f, 0.0f, 0.0f}};
  EXPECT_EQ(kind_of(wrong), ErrorKind::shape);
  EXPECT_EQ(kind_of(good), ErrorKind::io);

  oracle::Gen gen(1);
  try {
    run_float(g, good, gen.tensor({1, 8, 8, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(QuantExecutor, ZeroWeightsGiveHalfWithinOneStep) {
  const Graph g = build_graph(parse_spec("3/4/Y/1.1@16x16x3"));
  const WeightSet w = zero_weights(g);
  const std::vector<Tensor> calib{random_image(g, 1)};
  const Tensor y = run_quant(g, calibrated(g, w, calib), random_image(g, 2));
  for (float v : y.data()) EXPECT_NEAR(v, 0.5, 1.0 / 255.0);
}

TEST(QuantExecutor, TracksFloatPathOnToySpecs) {
  for (const char* text : {"2/4/Y/1.0@16x16x3", "3/6/Y/1.2@32x32x3", "4/8/N/1.1@32x32x1"}) {
    const Graph g = build_graph(parse_spec(text));
    const WeightSet w = generate_random_weights(g, 5);
    std::vector<Tensor> calib;
    for (std::uint64_t s = 0; s < 4; ++s) calib.push_back(random_image(g, 10 + s));
    const QuantWeightSet q = calibrated(g, w, calib);
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Tensor x = random_image(g, 50 + s);
      const Tensor a = run_float(g, w, x);
      const Tensor b = run_quant(g, q, x);
      ASSERT_EQ(a.shape(), b.shape());
      EXPECT_LE(oracle::max_abs_diff(a, b), 0.05) << text;
      for (float v : b.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
    EXPECT_EQ(run_quant(g, q, calib[0]), run_quant(g, q, calib[0]));
  }
}

TEST(QuantExecutor, EveryTensorHasExactlyOneParamEntry) {
  const Graph g = build_graph(parse_spec("3/4/Y/1.1@16x16x3"));
  const WeightSet w = generate_random_weights(g, 1);
  const QuantWeightSet q = calibrated(g, w, {random_image(g, 1)});
  std::set<std::string> want{kInputTensor, kHeadLogits};
  std::set<std::string> layers;
  for (const Node& n : g.nodes) {
    want.insert(n.name);
    if (n.op != OpKind::maxpool && n.op != OpKind::concat) layers.insert(n.name);
  }
  std::set<std::string> got;
  for (const auto& [name, qp] : q.activations) got.insert(name);
  EXPECT_EQ(got, want);
  std::set<std::string> got_layers;
  for (const auto& [name, l] : q.layers) {
    got_layers.insert(name);
    EXPECT_EQ(l.kernel.qp.zero_point, 0);
    EXPECT_EQ(l.bias_qp.zero_point, 0);
  }
  EXPECT_EQ(got_layers, layers);
  // Pooling keeps its input's parameters.
  EXPECT_EQ(q.activations.at("enc0_pool"), q.activations.at("enc0_conv2"));
}

TEST(QuantExecutor, UncalibratedTensorIsNamed) {
  const Graph g = build_graph(parse_spec("2/2/Y/1.0@8x8x1"));
  const WeightSet w = generate_random_weights(g, 1);
  QuantWeightSet q = calibrated(g, w, {random_image(g, 1)});
  q.activations.erase("dec0_concat");
  try {
    run_quant(g, q, random_image(g, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::binding);
    EXPECT_NE(std::string(e.what()).find("dec0_concat"), std::string::npos);
  }
  QuantWeightSet no_layer = calibrated(g, w, {random_image(g, 1)});
  no_layer.layers.erase("head");
  try {
    QuantExecutor e(g, no_layer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::binding);
  }
}

TEST(Calibration, RangeIsUnionOverImages) {
  const Graph g = build_graph(parse_spec("2/2/Y/1.0@8x8x1"));
  const WeightSet w = generate_random_weights(g, 1);
  const Tensor a = random_image(g, 1);
  Tensor b = random_image(g, 2);
  for (float& v : b.data()) v *= 3.0f;
  const ActivationRanges ra = observe_ranges(g, w, std::vector<Tensor>{a});
  const ActivationRanges rb = observe_ranges(g, w, std::vector<Tensor>{b});
  const ActivationRanges both = observe_ranges(g, w, std::vector<Tensor>{a, b});
  for (const auto& [name, r] : both) {
    EXPECT_EQ(r.lo, std::min(ra.at(name).lo, rb.at(name).lo)) << name;
    EXPECT_EQ(r.hi, std::max(ra.at(name).hi, rb.at(name).hi)) << name;
  }
  EXPECT_THROW(observe_ranges(g, w, std::vector<Tensor>{}), Error);
  Tensor bad = a;
  bad.data()[0] = NAN;
  EXPECT_THROW(observe_ranges(g, w, std::vector<Tensor>{bad}), Error);
}

TEST(Calibration, FoldedNormMatchesConvThenNorm) {
  const Graph g = build_graph(parse_spec("2/3/Y/1.0@8x8x2"));
  const WeightSet w = generate_random_weights(g, 4);
  const Node& n = g.node(g.find("enc0_conv1"));
  const Tensor x = random_image(g, 8);
  const Tensor folded = relu(conv2d(x, folded_conv(n, w)));
  EXPECT_LE(oracle::max_abs_diff(folded, conv_block(x, w, "enc0_conv1")), 1e-5);
}

TEST(PredictMask, StrictThreshold) {
  const Tensor p({1, 1, 4, 1}, std::vector<float>{0.2f, 0.5f, 0.50001f, 0.9f});
  const Mask m = predict_mask(p);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(m.count(), 2);
  EXPECT_EQ(predict_mask(p, 0.1f).count(), 4);
  for (float t : {0.0f, 1.0f, -0.5f, NAN}) EXPECT_THROW(predict_mask(p, t), Error);
}

}  // namespace
