#pragma once

#include <span>

#include "uedge/engine.hpp"
#include "uedge/quant.hpp"

namespace uedge {

// Runs the float path over every calibration image and records the union of
// per-tensor [min, max] ranges. Throws on an empty set or non-finite values.
ActivationRanges observe_ranges(const Graph& graph, const WeightSet& weights,
                                std::span<const Tensor> calib_images);

// Converts observed ranges into affine parameters. Max-pool outputs share
// the parameters of their input so pooling stays a pure int8 max.
ActivationParams activation_params(const Graph& graph, const ActivationRanges& ranges);

ActivationParams calibrate(const Graph& graph, const WeightSet& weights,
                           std::span<const Tensor> calib_images);

// Folds norm layers into their convolutions, quantizes every kernel
// symmetrically per tensor and every bias to int32 at input*kernel scale.
QuantWeightSet quantize_weights(const Graph& graph, const WeightSet& weights,
                                const ActivationParams& activations);

// Norm-folded float kernel and bias of a conv layer (identity for layers
// without norm).
ConvParams folded_conv(const Node& node, const WeightSet& weights);

}  // namespace uedge
