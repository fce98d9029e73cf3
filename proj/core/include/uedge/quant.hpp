#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uedge/tensor.hpp"

namespace uedge {

// Affine int8 mapping: real = (q - zero_point) * scale.
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

inline constexpr std::int32_t kQMin = -128;
inline constexpr std::int32_t kQMax = 127;

// Round half away from zero; the single rounding rule of the int8 path.
std::int64_t round_half_away(double v) noexcept;

std::int8_t quantize_value(double real, const QuantParams& qp) noexcept;
float dequantize_value(std::int8_t q, const QuantParams& qp) noexcept;

// Affine parameters covering [min(0, lo), max(0, hi)]. A degenerate range
// (both ends zero) widens to [0, 1].
QuantParams activation_params(float lo, float hi);

struct QuantTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  QuantParams qp;

  std::int64_t index(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t ch) const noexcept {
    return ((b * shape.h + y) * shape.w + x) * shape.c + ch;
  }
};

QuantTensor quantize(const Tensor& x, const QuantParams& qp);
Tensor dequantize(const QuantTensor& q);

// Symmetric per-tensor int8 kernel (zero_point 0), layout (kh, kw, c_in, c_out).
struct QuantKernel {
  std::int64_t kh = 0;
  std::int64_t kw = 0;
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  std::vector<std::int8_t> values;
  QuantParams qp;
};

// Largest kh*kw*c_in for which the int32 accumulator cannot overflow.
inline constexpr std::int64_t kMaxFanIn = 9 * 1024;

// scale = max|w| / 127; an all-zero kernel gets scale 1.
QuantKernel quantize_kernel(std::span<const float> kernel, std::int64_t kh, std::int64_t kw,
                            std::int64_t c_in, std::int64_t c_out);
// round(bias / (input_scale * weight_scale)) as int32.
std::vector<std::int32_t> quantize_bias(std::span<const float> bias, double input_scale,
                                        double weight_scale);

// 3x3 (or any odd) same-padded stride-1 int8 convolution with int32
// accumulation, requantized to out_qp.
QuantTensor qconv2d(const QuantTensor& x, const QuantKernel& k, std::span<const std::int32_t> bias,
                    const QuantParams& out_qp);
// 2x2 stride-2 transposed int8 convolution.
QuantTensor qupconv2(const QuantTensor& x, const QuantKernel& k,
                     std::span<const std::int32_t> bias, const QuantParams& out_qp);

// Scales int32 accumulators (real = acc * acc_scale) into out_qp.
QuantTensor requantize(std::span<const std::int32_t> acc, const Shape& shape, double acc_scale,
                       const QuantParams& out_qp);
// Re-expresses an int8 tensor in different affine parameters.
QuantTensor requantize(const QuantTensor& x, const QuantParams& out_qp);

QuantTensor qmaxpool2(const QuantTensor& x);
QuantTensor qrelu(const QuantTensor& x);
QuantTensor qconcat(const QuantTensor& a, const QuantTensor& b, const QuantParams& out_qp);

class SigmoidLut {
 public:
  SigmoidLut(const QuantParams& in, const QuantParams& out);
  std::int8_t operator()(std::int8_t q) const noexcept {
    return table_[static_cast<std::size_t>(static_cast<int>(q) - kQMin)];
  }
  QuantTensor apply(const QuantTensor& x) const;
  const QuantParams& out_params() const noexcept { return out_; }

 private:
  QuantParams in_;
  QuantParams out_;
  std::array<std::int8_t, 256> table_{};
};

// Parameters of one conv / upconv / head layer after quantization. Norm
// layers are folded into kernel and bias before quantization.
struct QuantLayer {
  QuantKernel kernel;
  std::vector<std::int32_t> bias;
  QuantParams bias_qp;  // scale = input scale * kernel scale, zero point 0
};

// Observed [min, max] per activation tensor.
struct ActivationRange {
  float lo = 0.0f;
  float hi = 0.0f;
};

using ActivationRanges = std::map<std::string, ActivationRange>;
using ActivationParams = std::map<std::string, QuantParams>;

// Activation tensor names: the network input and the head's pre-sigmoid
// logits in addition to every node output.
inline constexpr const char* kInputTensor = "input";
inline constexpr const char* kHeadLogits = "head.logits";

struct QuantWeightSet {
  std::string spec;
  std::string provenance;
  std::map<std::string, QuantLayer> layers;
  ActivationParams activations;
};

}  // namespace uedge
