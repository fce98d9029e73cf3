#include "uedge/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "parallel.hpp"

namespace uedge {

namespace {

std::atomic<unsigned> g_threads{std::max(1u, std::thread::hardware_concurrency())};

void require_nonempty_spatial(const Tensor& x, const char* op) {
  const Shape& s = x.shape();
  if (s.n <= 0 || s.h <= 0 || s.w <= 0) {
    throw_shape(std::string(op) + ": zero-sized input " + to_string(s));
  }
}

struct Window {
  std::int64_t out = 0;
  std::int64_t pad = 0;  // leading padding
};

Window conv_window(std::int64_t in, std::int64_t k, std::int64_t stride, Padding padding) {
  if (padding == Padding::same) {
    const std::int64_t out = (in + stride - 1) / stride;
    const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + k - in, 0);
    return {out, total / 2};
  }
  if (in < k) throw_shape("conv2d: valid padding with input smaller than kernel");
  return {(in - k) / stride + 1, 0};
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.h) + ", " + std::to_string(s.w) +
         ", " + std::to_string(s.c) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.h < 0 || shape.w < 0 || shape.c < 0) {
    throw_shape("negative dimension in " + to_string(shape));
  }
  data_.assign(static_cast<std::size_t>(shape.elements()), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape.n < 0 || shape.h < 0 || shape.w < 0 || shape.c < 0) {
    throw_shape("negative dimension in " + to_string(shape));
  }
  if (static_cast<std::int64_t>(data_.size()) != shape.elements()) {
    throw_shape("data length " + std::to_string(data_.size()) + " does not match " +
                to_string(shape));
  }
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void ConvParams::validate() const {
  if (kh <= 0 || kw <= 0 || c_in < 0 || c_out <= 0) throw_shape("conv: bad kernel dimensions");
  if (stride < 1) throw_shape("conv: stride must be >= 1");
  if (static_cast<std::int64_t>(kernel.size()) != kh * kw * c_in * c_out) {
    throw_shape("conv: kernel size does not match (kh, kw, c_in, c_out)");
  }
  if (static_cast<std::int64_t>(bias.size()) != c_out) throw_shape("conv: bias length != c_out");
  if (padding == Padding::same && (kh % 2 == 0 || kw % 2 == 0)) {
    throw_shape("conv: same padding requires odd kernel extents");
  }
}

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }
unsigned num_threads() { return g_threads; }

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  p.validate();
  require_nonempty_spatial(x, "conv2d");
  const Shape& in = x.shape();
  if (in.c != p.c_in) {
    throw_shape("conv2d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                std::to_string(p.c_in));
  }
  const Window wy = conv_window(in.h, p.kh, p.stride, p.padding);
  const Window wx = conv_window(in.w, p.kw, p.stride, p.padding);
  Tensor y({in.n, wy.out, wx.out, p.c_out});

  const std::int64_t cin = p.c_in;
  const std::int64_t cout = p.c_out;
  const float* kernel = p.kernel.data();
  const float* src = x.data().data();
  float* dst = y.data().data();

  // One row of output pixels per task; accumulation order per element is
  // bias, then taps (ky, kx) row-major, then input channels ascending.
  detail::parallel_for(in.n * wy.out, [&](std::int64_t row) {
    const std::int64_t b = row / wy.out;
    const std::int64_t oy = row % wy.out;
    for (std::int64_t ox = 0; ox < wx.out; ++ox) {
      float* __restrict acc = dst + y.index(b, oy, ox, 0);
      std::copy(p.bias.begin(), p.bias.end(), acc);
      for (std::int64_t ky = 0; ky < p.kh; ++ky) {
        const std::int64_t iy = oy * p.stride + ky - wy.pad;
        if (iy < 0 || iy >= in.h) continue;
        for (std::int64_t kx = 0; kx < p.kw; ++kx) {
          const std::int64_t ix = ox * p.stride + kx - wx.pad;
          if (ix < 0 || ix >= in.w) continue;
          const float* __restrict xin = src + x.index(b, iy, ix, 0);
          const float* __restrict wtap = kernel + (ky * p.kw + kx) * cin * cout;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            const float xv = xin[ci];
            const float* __restrict wrow = wtap + ci * cout;
            for (std::int64_t co = 0; co < cout; ++co) acc[co] += xv * wrow[co];
          }
        }
      }
    }
  });
  return y;
}

Tensor maxpool2(const Tensor& x) {
  require_nonempty_spatial(x, "maxpool2");
  const Shape& in = x.shape();
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw_shape("maxpool2: odd spatial dims " + to_string(in));
  }
  Tensor y({in.n, in.h / 2, in.w / 2, in.c});
  for (std::int64_t b = 0; b < in.n; ++b) {
    for (std::int64_t oy = 0; oy < in.h / 2; ++oy) {
      for (std::int64_t ox = 0; ox < in.w / 2; ++ox) {
        for (std::int64_t ch = 0; ch < in.c; ++ch) {
          const float m = std::max({x.at(b, 2 * oy, 2 * ox, ch), x.at(b, 2 * oy, 2 * ox + 1, ch),
                                    x.at(b, 2 * oy + 1, 2 * ox, ch),
                                    x.at(b, 2 * oy + 1, 2 * ox + 1, ch)});
          y.at(b, oy, ox, ch) = m;
        }
      }
    }
  }
  return y;
}

Tensor upconv2(const Tensor& x, const ConvParams& p) {
  if (p.kh != 2 || p.kw != 2) throw_shape("upconv2: kernel must be 2x2");
  if (p.c_out <= 0 || static_cast<std::int64_t>(p.kernel.size()) != 4 * p.c_in * p.c_out ||
      static_cast<std::int64_t>(p.bias.size()) != p.c_out) {
    throw_shape("upconv2: kernel/bias sizes inconsistent");
  }
  require_nonempty_spatial(x, "upconv2");
  const Shape& in = x.shape();
  if (in.c != p.c_in) throw_shape("upconv2: channel mismatch");
  const std::int64_t cin = p.c_in;
  const std::int64_t cout = p.c_out;
  Tensor y({in.n, in.h * 2, in.w * 2, cout});
  const float* src = x.data().data();
  float* dst = y.data().data();

  // Stride 2 with a 2x2 kernel: every output pixel receives exactly one tap.
  detail::parallel_for(in.n * in.h, [&](std::int64_t row) {
    const std::int64_t b = row / in.h;
    const std::int64_t iy = row % in.h;
    for (std::int64_t ix = 0; ix < in.w; ++ix) {
      const float* __restrict xin = src + x.index(b, iy, ix, 0);
      for (std::int64_t ky = 0; ky < 2; ++ky) {
        for (std::int64_t kx = 0; kx < 2; ++kx) {
          float* __restrict acc = dst + y.index(b, 2 * iy + ky, 2 * ix + kx, 0);
          std::copy(p.bias.begin(), p.bias.end(), acc);
          const float* __restrict wtap = p.kernel.data() + (ky * 2 + kx) * cin * cout;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            const float xv = xin[ci];
            const float* __restrict wrow = wtap + ci * cout;
            for (std::int64_t co = 0; co < cout; ++co) acc[co] += xv * wrow[co];
          }
        }
      }
    }
  });
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw_shape("concat_channels: spatial mismatch " + to_string(sa) + " vs " + to_string(sb));
  }
  Tensor y({sa.n, sa.h, sa.w, sa.c + sb.c});
  const std::int64_t pixels = sa.n * sa.h * sa.w;
  auto out = y.data().begin();
  for (std::int64_t i = 0; i < pixels; ++i) {
    out = std::copy_n(a.data().begin() + i * sa.c, sa.c, out);
    out = std::copy_n(b.data().begin() + i * sb.c, sb.c, out);
  }
  return y;
}

Tensor batchnorm_infer(const Tensor& x, std::span<const float> mean, std::span<const float> var,
                       std::span<const float> gamma, std::span<const float> beta, float eps) {
  const auto c = static_cast<std::size_t>(x.shape().c);
  if (mean.size() != c || var.size() != c || gamma.size() != c || beta.size() != c) {
    throw_shape("batchnorm_infer: parameter length does not match channel count");
  }
  std::vector<float> mul(c);
  std::vector<float> add(c);
  for (std::size_t i = 0; i < c; ++i) {
    if (!(var[i] + eps > 0.0f)) {
      throw Error(ErrorKind::numeric, "batchnorm_infer: var + eps must be positive");
    }
    mul[i] = gamma[i] / std::sqrt(var[i] + eps);
    add[i] = beta[i] - mean[i] * mul[i];
  }
  Tensor y = x;
  auto d = y.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t ch = i % c;
    d[i] = d[i] * mul[ch] + add[ch];
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data()) v = std::max(v, 0.0f);
  return y;
}

float sigmoid(float x) noexcept {
  // Kept strictly inside (0, 1) so probabilities never saturate to exact 0/1.
  constexpr float lo = std::numeric_limits<float>::min();
  const float hi = std::nextafter(1.0f, 0.0f);
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
  return std::clamp(static_cast<float>(s), lo, hi);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data()) v = sigmoid(v);
  return y;
}

}  // namespace uedge
