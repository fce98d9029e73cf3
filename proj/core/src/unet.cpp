#include "uedge/unet.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

namespace uedge {

namespace {

Error spec_error(const std::string& msg) { return Error(ErrorKind::spec, msg); }

template <typename T>
T parse_number(std::string_view field, std::string_view what) {
  T value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    throw spec_error("spec string: bad " + std::string(what) + " '" + std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string format_ratio(double ir) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), ir);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::int64_t conv_block_params(std::int64_t c_in, std::int64_t c_out, bool norm) {
  return 9 * c_in * c_out + c_out + (norm ? 2 * c_out : 0);
}

}  // namespace

std::int64_t ParamInfo::elements() const {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
}

void ModelSpec::validate() const {
  if (levels < 2 || levels > 16) throw spec_error("levels must be in [2, 16]");
  if (base_filters < 1) throw spec_error("base_filters must be >= 1");
  if (!std::isfinite(increment_ratio) || increment_ratio < 1.0) {
    throw spec_error("increment_ratio must be finite and >= 1.0");
  }
  if (input.height <= 0 || input.width <= 0 || input.channels <= 0) {
    throw spec_error("input size must be positive");
  }
  const std::int64_t div = std::int64_t{1} << (levels - 1);
  if (input.height % div != 0 || input.width % div != 0) {
    throw spec_error("input " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                     " is not divisible by 2^(levels-1) = " + std::to_string(div));
  }
}

ModelSpec parse_spec(std::string_view text) {
  ModelSpec spec;
  std::string_view body = text;
  if (const auto at = text.find('@'); at != std::string_view::npos) {
    body = text.substr(0, at);
    const auto dims = split(text.substr(at + 1), 'x');
    if (dims.size() != 3) throw spec_error("spec string: input size must be HxWxC");
    spec.input.height = parse_number<std::int64_t>(dims[0], "input height");
    spec.input.width = parse_number<std::int64_t>(dims[1], "input width");
    spec.input.channels = parse_number<std::int64_t>(dims[2], "input channels");
  }
  const auto fields = split(body, '/');
  if (fields.size() != 4) {
    throw spec_error("spec string '" + std::string(text) + "' is not of the form L/F/Y|N/IR");
  }
  spec.levels = parse_number<int>(fields[0], "level count");
  spec.base_filters = parse_number<int>(fields[1], "base filter count");
  if (fields[2] == "Y") {
    spec.use_norm = true;
  } else if (fields[2] == "N") {
    spec.use_norm = false;
  } else {
    throw spec_error("spec string: norm flag must be Y or N");
  }
  spec.increment_ratio = parse_number<double>(fields[3], "increment ratio");
  spec.validate();
  return spec;
}

std::string to_string(const ModelSpec& spec) {
  std::string s = std::to_string(spec.levels) + "/" + std::to_string(spec.base_filters) + "/" +
                  (spec.use_norm ? "Y" : "N") + "/" + format_ratio(spec.increment_ratio);
  if (spec.input != InputSize{}) {
    s += "@" + std::to_string(spec.input.height) + "x" + std::to_string(spec.input.width) + "x" +
         std::to_string(spec.input.channels);
  }
  return s;
}

ModelSpec preset(std::string_view name) {
  ModelSpec spec;
  spec.levels = 6;
  spec.increment_ratio = 1.1;
  spec.use_norm = true;
  if (name == "disc" || name == "thyroid_simple") {
    spec.base_filters = 40;
  } else if (name == "cup" || name == "thyroid_complex") {
    spec.base_filters = 64;
  } else {
    throw Error(ErrorKind::lookup, "unknown preset '" + std::string(name) + "'");
  }
  return spec;
}

std::vector<std::int64_t> channel_widths(const ModelSpec& spec) {
  spec.validate();
  std::vector<std::int64_t> widths;
  widths.reserve(static_cast<std::size_t>(spec.levels));
  for (int l = 0; l < spec.levels; ++l) {
    const double exact = spec.base_filters * std::pow(spec.increment_ratio, l);
    // Round half up; the epsilon absorbs representation error at exact ties.
    widths.push_back(static_cast<std::int64_t>(std::floor(exact + 0.5 + 1e-9)));
  }
  return widths;
}

std::string_view to_string(OpKind op) noexcept {
  switch (op) {
    case OpKind::conv3x3: return "conv3x3";
    case OpKind::maxpool: return "maxpool";
    case OpKind::upconv: return "upconv";
    case OpKind::concat: return "concat";
    case OpKind::head: return "head";
  }
  return "?";
}

std::string kernel_name(std::string_view layer) { return std::string(layer) + ".kernel"; }
std::string bias_name(std::string_view layer) { return std::string(layer) + ".bias"; }
std::string gamma_name(std::string_view layer) { return std::string(layer) + ".gamma"; }
std::string beta_name(std::string_view layer) { return std::string(layer) + ".beta"; }
std::string mean_name(std::string_view layer) { return std::string(layer) + ".moving_mean"; }
std::string var_name(std::string_view layer) { return std::string(layer) + ".moving_var"; }

Shape Graph::input_shape() const {
  return {1, spec.input.height, spec.input.width, spec.input.channels};
}

int Graph::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<ParamInfo> Graph::all_params() const {
  std::vector<ParamInfo> out;
  for (const Node& n : nodes) out.insert(out.end(), n.params.begin(), n.params.end());
  return out;
}

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(const ModelSpec& spec) { graph_.spec = spec; }

  int conv(const std::string& name, int input, std::int64_t c_out) {
    Node n = start(name, OpKind::conv3x3, {input});
    n.out_channels = c_out;
    n.norm = graph_.spec.use_norm;
    n.out_shape.c = c_out;
    n.params.push_back({kernel_name(name), {3, 3, n.in_channels, c_out}, true});
    n.params.push_back({bias_name(name), {c_out}, true});
    if (n.norm) {
      n.params.push_back({gamma_name(name), {c_out}, true});
      n.params.push_back({beta_name(name), {c_out}, true});
      n.params.push_back({mean_name(name), {c_out}, false});
      n.params.push_back({var_name(name), {c_out}, false});
    }
    return push(std::move(n));
  }

  int pool(const std::string& name, int input) {
    Node n = start(name, OpKind::maxpool, {input});
    n.out_channels = n.in_channels;
    n.out_shape.h /= 2;
    n.out_shape.w /= 2;
    return push(std::move(n));
  }

  int up(const std::string& name, int input, std::int64_t c_out) {
    Node n = start(name, OpKind::upconv, {input});
    n.out_channels = c_out;
    n.out_shape = {1, n.out_shape.h * 2, n.out_shape.w * 2, c_out};
    n.params.push_back({kernel_name(name), {2, 2, n.in_channels, c_out}, true});
    n.params.push_back({bias_name(name), {c_out}, true});
    return push(std::move(n));
  }

  int concat(const std::string& name, int skip, int decoder) {
    Node n = start(name, OpKind::concat, {skip, decoder});
    n.in_channels = shape_of(skip).c + shape_of(decoder).c;
    n.out_channels = n.in_channels;
    n.out_shape.c = n.out_channels;
    return push(std::move(n));
  }

  int head(int input) {
    Node n = start("head", OpKind::head, {input});
    n.out_channels = 1;
    n.out_shape.c = 1;
    n.params.push_back({kernel_name("head"), {1, 1, n.in_channels, 1}, true});
    n.params.push_back({bias_name("head"), {1}, true});
    return push(std::move(n));
  }

  Graph finish(int output) {
    graph_.output = output;
    return std::move(graph_);
  }

 private:
  Shape shape_of(int id) const {
    return id == kGraphInput ? graph_.input_shape() : graph_.node(id).out_shape;
  }

  Node start(const std::string& name, OpKind op, std::vector<int> inputs) {
    Node n;
    n.name = name;
    n.op = op;
    n.inputs = std::move(inputs);
    n.out_shape = shape_of(n.inputs.front());
    n.in_channels = n.out_shape.c;
    return n;
  }

  int push(Node n) {
    graph_.nodes.push_back(std::move(n));
    return static_cast<int>(graph_.nodes.size()) - 1;
  }

  Graph graph_;
};

}  // namespace

Graph build_graph(const ModelSpec& spec) {
  spec.validate();
  const auto widths = channel_widths(spec);
  const int L = spec.levels;
  GraphBuilder b(spec);

  std::vector<int> skips;
  int cur = kGraphInput;
  for (int l = 0; l < L - 1; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    cur = b.conv(prefix + "_conv1", cur, widths[l]);
    cur = b.conv(prefix + "_conv2", cur, widths[l]);
    skips.push_back(cur);
    cur = b.pool(prefix + "_pool", cur);
  }
  cur = b.conv("bott_conv1", cur, widths[L - 1]);
  cur = b.conv("bott_conv2", cur, widths[L - 1]);
  for (int l = L - 2; l >= 0; --l) {
    const std::string prefix = "dec" + std::to_string(l);
    const int up = b.up(prefix + "_up", cur, widths[l]);
    cur = b.concat(prefix + "_concat", skips[static_cast<std::size_t>(l)], up);
    cur = b.conv(prefix + "_conv1", cur, widths[l]);
    cur = b.conv(prefix + "_conv2", cur, widths[l]);
  }
  return b.finish(b.head(cur));
}

ParamCount count_params(const ModelSpec& spec) {
  const auto w = channel_widths(spec);
  const int L = spec.levels;
  const bool norm = spec.use_norm;
  ParamCount pc;
  auto add = [&pc](const std::string& name, std::int64_t n) {
    pc.per_layer[name] = n;
    pc.total += n;
  };
  std::int64_t prev = spec.input.channels;
  for (int l = 0; l < L - 1; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add(p + "_conv1", conv_block_params(prev, w[l], norm));
    add(p + "_conv2", conv_block_params(w[l], w[l], norm));
    prev = w[l];
  }
  add("bott_conv1", conv_block_params(w[L - 2], w[L - 1], norm));
  add("bott_conv2", conv_block_params(w[L - 1], w[L - 1], norm));
  for (int l = L - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    add(p + "_up", 4 * w[l + 1] * w[l] + w[l]);
    add(p + "_conv1", conv_block_params(2 * w[l], w[l], norm));
    add(p + "_conv2", conv_block_params(w[l], w[l], norm));
  }
  add("head", w[0] + 1);
  pc.mtp = static_cast<double>(pc.total) / 1e6;
  return pc;
}

ParamCount count_params(const Graph& graph) {
  ParamCount pc;
  for (const Node& n : graph.nodes) {
    std::int64_t layer = 0;
    for (const ParamInfo& p : n.params) {
      if (p.trainable) layer += p.elements();
    }
    if (!n.params.empty()) pc.per_layer[n.name] = layer;
    pc.total += layer;
  }
  pc.mtp = static_cast<double>(pc.total) / 1e6;
  return pc;
}

}  // namespace uedge
