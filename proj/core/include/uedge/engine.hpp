#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uedge/quant.hpp"
#include "uedge/tensor.hpp"
#include "uedge/unet.hpp"

namespace uedge {

// A named parameter tensor of arbitrary rank.
struct ParamTensor {
  std::vector<std::int64_t> dims;
  std::vector<float> values;
  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

struct WeightSet {
  std::string spec;
  std::string provenance;
  std::map<std::string, ParamTensor> tensors;

  std::int64_t scalar_count() const;
  // Scalars of the tensors the graph marks trainable (norm running
  // statistics excluded).
  std::int64_t trainable_scalar_count(const Graph& graph) const;
  // Throws ErrorKind::binding on a missing/extra name, ErrorKind::shape on
  // a dims mismatch.
  void check_against(const Graph& graph) const;

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

// He-normal kernels (std sqrt(2 / fan_in), truncated at two standard
// deviations), small random biases and norm parameters. Reproducible from
// `seed`.
WeightSet generate_random_weights(const Graph& graph, std::uint64_t seed);

struct Mask {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> data;  // row-major, values in {0, 1}

  Mask() = default;
  Mask(std::int64_t h, std::int64_t w) : height(h), width(w), data(static_cast<std::size_t>(h * w)) {}

  std::uint8_t at(std::int64_t y, std::int64_t x) const noexcept {
    return data[static_cast<std::size_t>(y * width + x)];
  }
  std::uint8_t& at(std::int64_t y, std::int64_t x) noexcept {
    return data[static_cast<std::size_t>(y * width + x)];
  }
  std::int64_t count() const noexcept;
  friend bool operator==(const Mask&, const Mask&) = default;
};

// prob > threshold, for the first batch item and channel 0.
Mask predict_mask(const Tensor& prob, float threshold = 0.5f);

// Receives every activation tensor the float path produces, by name.
using ActivationObserver = std::function<void(const std::string& name, const Tensor& value)>;

class FloatExecutor {
 public:
  FloatExecutor(Graph graph, const WeightSet& weights);

  // Image (n, H, W, C); returns the (n, H, W, 1) probability map.
  Tensor run(const Tensor& image) const;
  Tensor run(const Tensor& image, const ActivationObserver& observer) const;

  const Graph& graph() const noexcept { return graph_; }

 private:
  struct Bound {
    ConvParams conv;
    std::vector<float> mean, var, gamma, beta;
  };

  Graph graph_;
  std::vector<Bound> bound_;
};

class QuantExecutor {
 public:
  QuantExecutor(Graph graph, QuantWeightSet weights);

  // Quantizes the input, runs the int8 graph and dequantizes the head output.
  Tensor run(const Tensor& image) const;
  QuantTensor run_int8(const Tensor& image) const;

  const Graph& graph() const noexcept { return graph_; }

 private:
  const QuantParams& act(const std::string& name) const;

  Graph graph_;
  QuantWeightSet weights_;
};

Tensor run_float(const Graph& graph, const WeightSet& weights, const Tensor& image);
Tensor run_quant(const Graph& graph, const QuantWeightSet& weights, const Tensor& image);

// Runs the shape check shared by both executors.
void check_input(const Graph& graph, const Tensor& image);

}  // namespace uedge
