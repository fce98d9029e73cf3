#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uedge/tensor.hpp"

namespace uedge {

struct InputSize {
  std::int64_t height = 128;
  std::int64_t width = 128;
  std::int64_t channels = 3;
  friend bool operator==(const InputSize&, const InputSize&) = default;
};

// A generalized U-Net: `levels` resolution stages (the last is the
// bottleneck), `base_filters` channels at stage 0, and widths growing by
// `increment_ratio` per stage.
struct ModelSpec {
  int levels = 6;
  int base_filters = 64;
  double increment_ratio = 1.1;
  bool use_norm = true;
  InputSize input;

  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// "L/F/Y|N/IR", e.g. "6/64/Y/1.1". A non-default input size is appended as
// "@HxWxC".
ModelSpec parse_spec(std::string_view text);
std::string to_string(const ModelSpec& spec);

// disc, cup, thyroid_simple, thyroid_complex.
ModelSpec preset(std::string_view name);

std::vector<std::int64_t> channel_widths(const ModelSpec& spec);

// BatchNorm epsilon used by every norm layer.
inline constexpr float kNormEpsilon = 1e-3f;

enum class OpKind {
  conv3x3,  // 3x3 same conv, optional norm, relu
  maxpool,
  upconv,   // 2x2 transposed conv, stride 2, no activation
  concat,   // encoder features first
  head      // 1x1 conv + sigmoid
};

std::string_view to_string(OpKind op) noexcept;

// Input references use node indices; kGraphInput is the network input.
inline constexpr int kGraphInput = -1;

struct ParamInfo {
  std::string name;
  std::vector<std::int64_t> dims;
  bool trainable = true;

  std::int64_t elements() const;
};

struct Node {
  std::string name;
  OpKind op = OpKind::conv3x3;
  std::vector<int> inputs;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  bool norm = false;
  Shape out_shape;
  std::vector<ParamInfo> params;
};

struct Graph {
  ModelSpec spec;
  std::vector<Node> nodes;  // topologically ordered
  int output = 0;

  Shape input_shape() const;
  const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  // Index of the node with this name, or -1.
  int find(std::string_view name) const;
  std::vector<ParamInfo> all_params() const;
};

Graph build_graph(const ModelSpec& spec);

struct ParamCount {
  std::int64_t total = 0;
  std::map<std::string, std::int64_t> per_layer;
  double mtp = 0.0;
};

// Closed-form trainable parameter count from the block definition.
ParamCount count_params(const ModelSpec& spec);
// The same count obtained by walking the trainable parameters of a graph.
ParamCount count_params(const Graph& graph);

// Parameter tensor names for a layer.
std::string kernel_name(std::string_view layer);
std::string bias_name(std::string_view layer);
std::string gamma_name(std::string_view layer);
std::string beta_name(std::string_view layer);
std::string mean_name(std::string_view layer);
std::string var_name(std::string_view layer);

}  // namespace uedge
