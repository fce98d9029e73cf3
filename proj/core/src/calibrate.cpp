#include "uedge/calibrate.hpp"

#include <algorithm>
#include <cmath>

namespace uedge {

namespace {

const ParamTensor& param(const WeightSet& w, const std::string& name) {
  const auto it = w.tensors.find(name);
  if (it == w.tensors.end()) throw Error(ErrorKind::binding, "missing parameter '" + name + "'");
  return it->second;
}

}  // namespace

ActivationRanges observe_ranges(const Graph& graph, const WeightSet& weights,
                                std::span<const Tensor> calib_images) {
  if (calib_images.empty()) throw Error(ErrorKind::argument, "calibration set is empty");
  const FloatExecutor exec(graph, weights);
  ActivationRanges ranges;
  auto observe = [&ranges](const std::string& name, const Tensor& t) {
    const auto d = t.data();
    if (d.empty()) return;
    float lo = d[0];
    float hi = d[0];
    for (float v : d) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::numeric, "non-finite activation in tensor '" + name + "'");
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    auto [it, inserted] = ranges.try_emplace(name, ActivationRange{lo, hi});
    if (!inserted) {
      it->second.lo = std::min(it->second.lo, lo);
      it->second.hi = std::max(it->second.hi, hi);
    }
  };
  for (const Tensor& image : calib_images) exec.run(image, observe);
  return ranges;
}

ActivationParams activation_params(const Graph& graph, const ActivationRanges& ranges) {
  ActivationParams out;
  for (const auto& [name, r] : ranges) out[name] = activation_params(r.lo, r.hi);
  for (const Node& n : graph.nodes) {
    if (n.op != OpKind::maxpool) continue;
    const int src = n.inputs.front();
    const std::string src_name = src == kGraphInput ? kInputTensor : graph.node(src).name;
    if (out.contains(src_name)) out[n.name] = out.at(src_name);
  }
  return out;
}

ActivationParams calibrate(const Graph& graph, const WeightSet& weights,
                           std::span<const Tensor> calib_images) {
  return activation_params(graph, observe_ranges(graph, weights, calib_images));
}

ConvParams folded_conv(const Node& node, const WeightSet& weights) {
  const ParamTensor& k = param(weights, kernel_name(node.name));
  ConvParams p;
  p.kh = k.dims.at(0);
  p.kw = k.dims.at(1);
  p.c_in = k.dims.at(2);
  p.c_out = k.dims.at(3);
  p.kernel = k.values;
  p.bias = param(weights, bias_name(node.name)).values;
  if (!node.norm) return p;

  // y = (conv(x) + b - mean) * gamma / sqrt(var + eps) + beta
  const auto& gamma = param(weights, gamma_name(node.name)).values;
  const auto& beta = param(weights, beta_name(node.name)).values;
  const auto& mean = param(weights, mean_name(node.name)).values;
  const auto& var = param(weights, var_name(node.name)).values;
  const auto cout = static_cast<std::size_t>(p.c_out);
  for (std::size_t co = 0; co < cout; ++co) {
    const double mul = gamma[co] / std::sqrt(static_cast<double>(var[co]) + kNormEpsilon);
    for (std::size_t i = co; i < p.kernel.size(); i += cout) {
      p.kernel[i] = static_cast<float>(p.kernel[i] * mul);
    }
    p.bias[co] = static_cast<float>((p.bias[co] - mean[co]) * mul + beta[co]);
  }
  return p;
}

QuantWeightSet quantize_weights(const Graph& graph, const WeightSet& weights,
                                const ActivationParams& activations) {
  weights.check_against(graph);
  QuantWeightSet q;
  q.spec = weights.spec.empty() ? to_string(graph.spec) : weights.spec;
  q.provenance = weights.provenance;
  q.activations = activations;
  for (const Node& n : graph.nodes) {
    if (n.op != OpKind::conv3x3 && n.op != OpKind::upconv && n.op != OpKind::head) continue;
    const int src = n.inputs.front();
    const std::string in_name = src == kGraphInput ? kInputTensor : graph.node(src).name;
    const auto in_qp = activations.find(in_name);
    if (in_qp == activations.end()) {
      throw Error(ErrorKind::binding, "uncalibrated activation tensor '" + in_name + "'");
    }
    const ConvParams p = folded_conv(n, weights);
    QuantLayer layer;
    layer.kernel = quantize_kernel(p.kernel, p.kh, p.kw, p.c_in, p.c_out);
    if (p.kh * p.kw * p.c_in > kMaxFanIn) {
      throw Error(ErrorKind::spec, "layer '" + n.name + "' fan-in exceeds the int8 accumulator limit");
    }
    layer.bias_qp = {in_qp->second.scale * layer.kernel.qp.scale, 0};
    layer.bias = quantize_bias(p.bias, in_qp->second.scale, layer.kernel.qp.scale);
    q.layers.emplace(n.name, std::move(layer));
  }
  return q;
}

}  // namespace uedge
