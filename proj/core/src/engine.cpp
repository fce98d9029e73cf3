#include "uedge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>

namespace uedge {

namespace {

const ParamTensor& lookup(const WeightSet& w, const std::string& name) {
  const auto it = w.tensors.find(name);
  if (it == w.tensors.end()) throw Error(ErrorKind::binding, "missing parameter '" + name + "'");
  return it->second;
}

// Index of the last node that consumes each node's output (or the node
// itself when nothing does), so intermediate tensors can be released early.
std::vector<int> last_uses(const Graph& g) {
  std::vector<int> last(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) last[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (int in : g.nodes[i].inputs) {
      if (in != kGraphInput) last[static_cast<std::size_t>(in)] = static_cast<int>(i);
    }
  }
  last[static_cast<std::size_t>(g.output)] = static_cast<int>(g.nodes.size());
  return last;
}

template <typename T>
class ActivationStore {
 public:
  ActivationStore(const Graph& g, const T& input)
      : input_(input), values_(g.nodes.size()), last_(last_uses(g)) {}

  const T& get(int id) const {
    return id == kGraphInput ? input_ : *values_[static_cast<std::size_t>(id)];
  }
  void put(int id, T value) { values_[static_cast<std::size_t>(id)] = std::move(value); }
  // Drops every tensor whose last consumer is `id`.
  void release_after(int id) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (last_[i] == id && static_cast<int>(i) != id) values_[i].reset();
    }
  }
  T take(int id) { return std::move(*values_[static_cast<std::size_t>(id)]); }

 private:
  const T& input_;
  std::vector<std::optional<T>> values_;
  std::vector<int> last_;
};

}  // namespace

std::int64_t WeightSet::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : tensors) n += static_cast<std::int64_t>(t.values.size());
  return n;
}

std::int64_t WeightSet::trainable_scalar_count(const Graph& graph) const {
  std::int64_t n = 0;
  for (const ParamInfo& p : graph.all_params()) {
    if (p.trainable) n += static_cast<std::int64_t>(lookup(*this, p.name).values.size());
  }
  return n;
}

void WeightSet::check_against(const Graph& graph) const {
  std::set<std::string> expected;
  for (const ParamInfo& p : graph.all_params()) {
    expected.insert(p.name);
    const ParamTensor& t = lookup(*this, p.name);
    if (t.dims != p.dims) throw_shape("parameter '" + p.name + "' has unexpected dims");
    if (static_cast<std::int64_t>(t.values.size()) != p.elements()) {
      throw_shape("parameter '" + p.name + "' payload does not match its dims");
    }
  }
  for (const auto& [name, t] : tensors) {
    if (!expected.contains(name)) {
      throw Error(ErrorKind::binding, "parameter '" + name + "' is not part of the graph");
    }
  }
}

namespace {
// Standard deviation of a unit normal truncated to [-2, 2].
constexpr double kTruncatedStd = 0.87962566103423978;
}  // namespace

WeightSet generate_random_weights(const Graph& graph, std::uint64_t seed) {
  WeightSet w;
  w.spec = to_string(graph.spec);
  w.provenance = "random-init seed=" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const ParamInfo& p : graph.all_params()) {
    ParamTensor t{p.dims, std::vector<float>(static_cast<std::size_t>(p.elements()))};
    const std::string_view name = p.name;
    for (float& v : t.values) {
      double z = normal(rng);
      if (name.ends_with(".kernel")) {
        // Truncated at two standard deviations and rescaled to unit variance.
        while (std::abs(z) > 2.0) z = normal(rng);
        z /= kTruncatedStd;
        // Transposed convs count fans the way the common frameworks do,
        // with the roles of c_in and c_out swapped: kh*kw*c_out.
        const std::int64_t fan_in = name.find("_up.") != std::string_view::npos
                                        ? p.dims[0] * p.dims[1] * p.dims[3]
                                        : p.dims[0] * p.dims[1] * p.dims[2];
        v = static_cast<float>(z * std::sqrt(2.0 / static_cast<double>(fan_in)));
      } else if (name.ends_with(".gamma")) {
        v = static_cast<float>(1.0 + 0.1 * z);
      } else if (name.ends_with(".moving_var")) {
        v = static_cast<float>(std::exp(0.2 * z));
      } else if (name.ends_with(".moving_mean")) {
        v = static_cast<float>(0.1 * z);
      } else {
        v = static_cast<float>(0.05 * z);
      }
    }
    w.tensors.emplace(p.name, std::move(t));
  }
  return w;
}

std::int64_t Mask::count() const noexcept {
  return std::count(data.begin(), data.end(), std::uint8_t{1});
}

Mask predict_mask(const Tensor& prob, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) {
    throw Error(ErrorKind::argument, "threshold must lie in (0, 1)");
  }
  const Shape& s = prob.shape();
  if (s.n < 1 || s.c < 1) throw_shape("predict_mask: empty probability map");
  Mask m(s.h, s.w);
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) m.at(y, x) = prob.at(0, y, x, 0) > threshold ? 1 : 0;
  }
  return m;
}

void check_input(const Graph& graph, const Tensor& image) {
  const Shape& s = image.shape();
  const InputSize& in = graph.spec.input;
  if (s.n < 1 || s.h != in.height || s.w != in.width || s.c != in.channels) {
    throw_shape("input image " + to_string(s) + " does not match model input " +
                std::to_string(in.height) + "x" + std::to_string(in.width) + "x" +
                std::to_string(in.channels));
  }
}

FloatExecutor::FloatExecutor(Graph graph, const WeightSet& weights) : graph_(std::move(graph)) {
  weights.check_against(graph_);
  bound_.resize(graph_.nodes.size());
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const Node& n = graph_.nodes[i];
    Bound& b = bound_[i];
    if (n.op == OpKind::conv3x3 || n.op == OpKind::upconv || n.op == OpKind::head) {
      const ParamTensor& k = lookup(weights, kernel_name(n.name));
      b.conv.kh = k.dims[0];
      b.conv.kw = k.dims[1];
      b.conv.c_in = k.dims[2];
      b.conv.c_out = k.dims[3];
      b.conv.kernel = k.values;
      b.conv.bias = lookup(weights, bias_name(n.name)).values;
      b.conv.stride = n.op == OpKind::upconv ? 2 : 1;
      b.conv.padding = Padding::same;
    }
    if (n.norm) {
      b.gamma = lookup(weights, gamma_name(n.name)).values;
      b.beta = lookup(weights, beta_name(n.name)).values;
      b.mean = lookup(weights, mean_name(n.name)).values;
      b.var = lookup(weights, var_name(n.name)).values;
    }
  }
}

Tensor FloatExecutor::run(const Tensor& image) const { return run(image, nullptr); }

Tensor FloatExecutor::run(const Tensor& image, const ActivationObserver& observer) const {
  check_input(graph_, image);
  if (observer) observer(kInputTensor, image);
  ActivationStore<Tensor> store(graph_, image);
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const Node& n = graph_.nodes[i];
    const Bound& b = bound_[i];
    const Tensor& in = store.get(n.inputs.front());
    Tensor y;
    switch (n.op) {
      case OpKind::conv3x3:
        y = conv2d(in, b.conv);
        if (n.norm) y = batchnorm_infer(y, b.mean, b.var, b.gamma, b.beta, kNormEpsilon);
        y = relu(y);
        break;
      case OpKind::maxpool:
        y = maxpool2(in);
        break;
      case OpKind::upconv:
        y = upconv2(in, b.conv);
        break;
      case OpKind::concat:
        y = concat_channels(in, store.get(n.inputs[1]));
        break;
      case OpKind::head:
        y = conv2d(in, b.conv);
        if (observer) observer(kHeadLogits, y);
        y = sigmoid(y);
        break;
    }
    if (observer) observer(n.name, y);
    store.put(static_cast<int>(i), std::move(y));
    store.release_after(static_cast<int>(i));
  }
  return store.take(graph_.output);
}

QuantExecutor::QuantExecutor(Graph graph, QuantWeightSet weights)
    : graph_(std::move(graph)), weights_(std::move(weights)) {
  for (const Node& n : graph_.nodes) {
    if (n.op != OpKind::conv3x3 && n.op != OpKind::upconv && n.op != OpKind::head) continue;
    const auto it = weights_.layers.find(n.name);
    if (it == weights_.layers.end()) {
      throw Error(ErrorKind::binding, "missing quantized layer '" + n.name + "'");
    }
    const QuantKernel& k = it->second.kernel;
    const std::int64_t kh = n.op == OpKind::conv3x3 ? 3 : n.op == OpKind::upconv ? 2 : 1;
    if (k.kh != kh || k.kw != kh || k.c_in != n.in_channels || k.c_out != n.out_channels ||
        static_cast<std::int64_t>(it->second.bias.size()) != n.out_channels) {
      throw_shape("quantized layer '" + n.name + "' has unexpected dims");
    }
  }
}

const QuantParams& QuantExecutor::act(const std::string& name) const {
  const auto it = weights_.activations.find(name);
  if (it == weights_.activations.end()) {
    throw Error(ErrorKind::binding, "uncalibrated activation tensor '" + name + "'");
  }
  return it->second;
}

QuantTensor QuantExecutor::run_int8(const Tensor& image) const {
  check_input(graph_, image);
  const QuantTensor qin = quantize(image, act(kInputTensor));
  ActivationStore<QuantTensor> store(graph_, qin);
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const Node& n = graph_.nodes[i];
    const QuantTensor& in = store.get(n.inputs.front());
    QuantTensor y;
    switch (n.op) {
      case OpKind::conv3x3: {
        const QuantLayer& l = weights_.layers.at(n.name);
        y = qrelu(qconv2d(in, l.kernel, l.bias, act(n.name)));
        break;
      }
      case OpKind::maxpool:
        y = requantize(qmaxpool2(in), act(n.name));
        break;
      case OpKind::upconv: {
        const QuantLayer& l = weights_.layers.at(n.name);
        y = qupconv2(in, l.kernel, l.bias, act(n.name));
        break;
      }
      case OpKind::concat:
        y = qconcat(in, store.get(n.inputs[1]), act(n.name));
        break;
      case OpKind::head: {
        const QuantLayer& l = weights_.layers.at(n.name);
        const QuantParams& logits_qp = act(kHeadLogits);
        const QuantTensor logits = qconv2d(in, l.kernel, l.bias, logits_qp);
        y = SigmoidLut(logits_qp, act(n.name)).apply(logits);
        break;
      }
    }
    store.put(static_cast<int>(i), std::move(y));
    store.release_after(static_cast<int>(i));
  }
  return store.take(graph_.output);
}

Tensor QuantExecutor::run(const Tensor& image) const {
  Tensor prob = dequantize(run_int8(image));
  for (float& v : prob.data()) v = std::clamp(v, 0.0f, 1.0f);
  return prob;
}

Tensor run_float(const Graph& graph, const WeightSet& weights, const Tensor& image) {
  return FloatExecutor(graph, weights).run(image);
}

Tensor run_quant(const Graph& graph, const QuantWeightSet& weights, const Tensor& image) {
  return QuantExecutor(graph, weights).run(image);
}

}  // namespace uedge
