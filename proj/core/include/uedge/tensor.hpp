#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uedge/error.hpp"

namespace uedge {

// (batch, height, width, channels), channel-innermost.
struct Shape {
  std::int64_t n = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;

  std::int64_t elements() const noexcept { return n * h * w * c; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }

  std::int64_t index(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t ch) const noexcept {
    return ((b * shape_.h + y) * shape_.w + x) * shape_.c + ch;
  }
  float& at(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t ch) noexcept {
    return data_[static_cast<std::size_t>(index(b, y, x, ch))];
  }
  float at(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t ch) const noexcept {
    return data_[static_cast<std::size_t>(index(b, y, x, ch))];
  }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

enum class Padding { same, valid };

// Kernel laid out (kh, kw, c_in, c_out); bias has c_out entries.
struct ConvParams {
  std::int64_t kh = 0;
  std::int64_t kw = 0;
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  std::vector<float> kernel;
  std::vector<float> bias;
  std::int64_t stride = 1;
  Padding padding = Padding::same;

  void validate() const;
};

// Worker count used by the layer primitives. Results do not depend on it.
void set_num_threads(unsigned n);
unsigned num_threads();

Tensor conv2d(const Tensor& x, const ConvParams& p);
Tensor maxpool2(const Tensor& x);
// 2x2 transposed convolution, stride 2. Kernel (2, 2, c_in, c_out).
Tensor upconv2(const Tensor& x, const ConvParams& p);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor batchnorm_infer(const Tensor& x, std::span<const float> mean, std::span<const float> var,
                       std::span<const float> gamma, std::span<const float> beta, float eps);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Scalar sigmoid shared by the float path and the int8 lookup table.
float sigmoid(float x) noexcept;

}  // namespace uedge
