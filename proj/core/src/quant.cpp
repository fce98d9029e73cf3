#include "uedge/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "parallel.hpp"

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace uedge {

namespace {

std::int8_t saturate(std::int64_t v) noexcept {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, kQMin, kQMax));
}

void check_kernel(const QuantKernel& k) {
  if (k.qp.zero_point != 0) throw Error(ErrorKind::argument, "int8 kernel must have zero_point 0");
  if (static_cast<std::int64_t>(k.values.size()) != k.kh * k.kw * k.c_in * k.c_out) {
    throw_shape("int8 kernel size does not match its dims");
  }
  if (k.kh * k.kw * k.c_in > kMaxFanIn) {
    throw Error(ErrorKind::spec, "int8 kernel fan-in " + std::to_string(k.kh * k.kw * k.c_in) +
                                     " exceeds the int32 accumulator limit " +
                                     std::to_string(kMaxFanIn));
  }
}

// a[co] += x0 * w[2 co] + x1 * w[2 co + 1], exact in int32.
inline void accumulate_pair(std::int32_t* __restrict a, const std::int16_t* __restrict w, std::int16_t x0,
                            std::int16_t x1, std::int64_t cout) {
  std::int64_t co = 0;
#if defined(__SSE2__)
  const __m128i xx = _mm_set1_epi32(static_cast<std::int32_t>(static_cast<std::uint16_t>(x0)) |
                                    (static_cast<std::int32_t>(static_cast<std::uint16_t>(x1)) << 16));
  for (; co + 4 <= cout; co += 4) {
    const __m128i wv = _mm_loadu_si128(reinterpret_cast<const __m128i*>(w + 2 * co));
    const __m128i av = _mm_loadu_si128(reinterpret_cast<const __m128i*>(a + co));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(a + co), _mm_add_epi32(av, _mm_madd_epi16(wv, xx)));
  }
#endif
  for (; co < cout; ++co) {
    a[co] += static_cast<std::int32_t>(x0) * w[2 * co] + static_cast<std::int32_t>(x1) * w[2 * co + 1];
  }
}

}  // namespace

std::int64_t round_half_away(double v) noexcept { return static_cast<std::int64_t>(std::round(v)); }

std::int8_t quantize_value(double real, const QuantParams& qp) noexcept {
  const double scaled = real / qp.scale;
  // Values far outside the grid saturate before the integer conversion.
  if (scaled > 1e9) return static_cast<std::int8_t>(kQMax);
  if (scaled < -1e9) return static_cast<std::int8_t>(kQMin);
  return saturate(round_half_away(scaled) + qp.zero_point);
}

float dequantize_value(std::int8_t q, const QuantParams& qp) noexcept {
  return static_cast<float>((static_cast<std::int32_t>(q) - qp.zero_point) * qp.scale);
}

QuantParams activation_params(float lo, float hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw Error(ErrorKind::numeric, "activation range is not a finite interval");
  }
  double a = std::min(0.0, static_cast<double>(lo));
  double b = std::max(0.0, static_cast<double>(hi));
  if (a == b) {
    a = 0.0;
    b = 1.0;
  }
  QuantParams qp;
  qp.scale = (b - a) / 255.0;
  qp.zero_point = static_cast<std::int32_t>(
      std::clamp<std::int64_t>(round_half_away(kQMin - a / qp.scale), kQMin, kQMax));
  return qp;
}

QuantTensor quantize(const Tensor& x, const QuantParams& qp) {
  QuantTensor q{x.shape(), std::vector<std::int8_t>(static_cast<std::size_t>(x.size())), qp};
  const auto src = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) q.data[i] = quantize_value(src[i], qp);
  return q;
}

Tensor dequantize(const QuantTensor& q) {
  Tensor x(q.shape);
  auto dst = x.data();
  for (std::size_t i = 0; i < q.data.size(); ++i) dst[i] = dequantize_value(q.data[i], q.qp);
  return x;
}

QuantKernel quantize_kernel(std::span<const float> kernel, std::int64_t kh, std::int64_t kw,
                            std::int64_t c_in, std::int64_t c_out) {
  if (static_cast<std::int64_t>(kernel.size()) != kh * kw * c_in * c_out) {
    throw_shape("quantize_kernel: size does not match dims");
  }
  float max_abs = 0.0f;
  for (float v : kernel) {
    if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "quantize_kernel: non-finite weight");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  QuantKernel k{kh, kw, c_in, c_out, {}, {}};
  k.qp.scale = max_abs > 0.0f ? static_cast<double>(max_abs) / kQMax : 1.0;
  k.qp.zero_point = 0;
  k.values.resize(kernel.size());
  for (std::size_t i = 0; i < kernel.size(); ++i) k.values[i] = quantize_value(kernel[i], k.qp);
  return k;
}

std::vector<std::int32_t> quantize_bias(std::span<const float> bias, double input_scale,
                                        double weight_scale) {
  const double scale = input_scale * weight_scale;
  std::vector<std::int32_t> out(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    const double v = std::round(static_cast<double>(bias[i]) / scale);
    if (!std::isfinite(v) || std::fabs(v) > std::numeric_limits<std::int32_t>::max()) {
      throw Error(ErrorKind::numeric, "quantize_bias: bias does not fit int32 at this scale");
    }
    out[i] = static_cast<std::int32_t>(v);
  }
  return out;
}

QuantTensor requantize(std::span<const std::int32_t> acc, const Shape& shape, double acc_scale,
                       const QuantParams& out_qp) {
  if (static_cast<std::int64_t>(acc.size()) != shape.elements()) {
    throw_shape("requantize: accumulator count does not match shape");
  }
  const double m = acc_scale / out_qp.scale;
  QuantTensor q{shape, std::vector<std::int8_t>(acc.size()), out_qp};
  for (std::size_t i = 0; i < acc.size(); ++i) {
    q.data[i] = saturate(round_half_away(acc[i] * m) + out_qp.zero_point);
  }
  return q;
}

QuantTensor requantize(const QuantTensor& x, const QuantParams& out_qp) {
  if (x.qp == out_qp) return x;
  const double m = x.qp.scale / out_qp.scale;
  QuantTensor q{x.shape, std::vector<std::int8_t>(x.data.size()), out_qp};
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const std::int32_t centered = static_cast<std::int32_t>(x.data[i]) - x.qp.zero_point;
    q.data[i] = saturate(round_half_away(centered * m) + out_qp.zero_point);
  }
  return q;
}

QuantTensor qconv2d(const QuantTensor& x, const QuantKernel& k, std::span<const std::int32_t> bias,
                    const QuantParams& out_qp) {
  check_kernel(k);
  if (k.kh % 2 == 0 || k.kw % 2 == 0) throw_shape("qconv2d: kernel extents must be odd");
  if (x.shape.c != k.c_in) throw_shape("qconv2d: channel mismatch");
  if (static_cast<std::int64_t>(bias.size()) != k.c_out) throw_shape("qconv2d: bias length");
  if (x.shape.h <= 0 || x.shape.w <= 0) throw_shape("qconv2d: zero-sized input");

  const Shape in = x.shape;
  const Shape out{in.n, in.h, in.w, k.c_out};
  const std::int64_t cin = k.c_in;
  const std::int64_t cout = k.c_out;
  const std::int64_t py = k.kh / 2;
  const std::int64_t px = k.kw / 2;
  const std::int32_t zp = x.qp.zero_point;
  const double m = x.qp.scale * k.qp.scale / out_qp.scale;
  QuantTensor y{out, std::vector<std::int8_t>(static_cast<std::size_t>(out.elements())), out_qp};

  // Weights widened to int16 and interleaved by input-channel pairs, so
  // each step multiplies two channels at once: for tap t, pair j and
  // output co the entries are (w[t][2j][co], w[t][2j+1][co]).
  const std::int64_t taps = k.kh * k.kw;
  const std::int64_t pairs = (cin + 1) / 2;
  std::vector<std::int16_t> packed(static_cast<std::size_t>(taps * pairs * cout * 2), 0);
  for (std::int64_t t = 0; t < taps; ++t) {
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      for (std::int64_t co = 0; co < cout; ++co) {
        packed[static_cast<std::size_t>(((t * pairs + ci / 2) * cout + co) * 2 + ci % 2)] =
            k.values[static_cast<std::size_t>((t * cin + ci) * cout + co)];
      }
    }
  }

  // Padded taps hold real zero, i.e. (q - zp) == 0, so they contribute nothing.
  detail::parallel_for(in.n * in.h, [&](std::int64_t row) {
    const std::int64_t b = row / in.h;
    const std::int64_t oy = row % in.h;
    std::vector<std::int32_t> acc(static_cast<std::size_t>(cout));
    std::vector<std::int16_t> xs(static_cast<std::size_t>(pairs * 2), 0);
    for (std::int64_t ox = 0; ox < in.w; ++ox) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      std::int32_t* __restrict a = acc.data();
      for (std::int64_t ky = 0; ky < k.kh; ++ky) {
        const std::int64_t iy = oy + ky - py;
        if (iy < 0 || iy >= in.h) continue;
        for (std::int64_t kx = 0; kx < k.kw; ++kx) {
          const std::int64_t ix = ox + kx - px;
          if (ix < 0 || ix >= in.w) continue;
          const std::int8_t* xin = x.data.data() + x.index(b, iy, ix, 0);
          for (std::int64_t ci = 0; ci < cin; ++ci) xs[static_cast<std::size_t>(ci)] = static_cast<std::int16_t>(xin[ci] - zp);
          const std::int16_t* wtap = packed.data() + (ky * k.kw + kx) * pairs * cout * 2;
          for (std::int64_t j = 0; j < pairs; ++j) {
            accumulate_pair(a, wtap + j * cout * 2, xs[static_cast<std::size_t>(2 * j)],
                            xs[static_cast<std::size_t>(2 * j + 1)], cout);
          }
        }
      }
      std::int8_t* dst = y.data.data() + y.index(b, oy, ox, 0);
      for (std::int64_t co = 0; co < cout; ++co) {
        dst[co] = saturate(round_half_away(a[co] * m) + out_qp.zero_point);
      }
    }
  });
  return y;
}

QuantTensor qupconv2(const QuantTensor& x, const QuantKernel& k,
                     std::span<const std::int32_t> bias, const QuantParams& out_qp) {
  check_kernel(k);
  if (k.kh != 2 || k.kw != 2) throw_shape("qupconv2: kernel must be 2x2");
  if (x.shape.c != k.c_in) throw_shape("qupconv2: channel mismatch");
  if (static_cast<std::int64_t>(bias.size()) != k.c_out) throw_shape("qupconv2: bias length");

  const Shape in = x.shape;
  const Shape out{in.n, in.h * 2, in.w * 2, k.c_out};
  const std::int64_t cin = k.c_in;
  const std::int64_t cout = k.c_out;
  const std::int32_t zp = x.qp.zero_point;
  const double m = x.qp.scale * k.qp.scale / out_qp.scale;
  QuantTensor y{out, std::vector<std::int8_t>(static_cast<std::size_t>(out.elements())), out_qp};

  detail::parallel_for(in.n * in.h, [&](std::int64_t row) {
    const std::int64_t b = row / in.h;
    const std::int64_t iy = row % in.h;
    std::vector<std::int32_t> acc(static_cast<std::size_t>(cout));
    for (std::int64_t ix = 0; ix < in.w; ++ix) {
      const std::int8_t* __restrict xin = x.data.data() + x.index(b, iy, ix, 0);
      for (std::int64_t tap = 0; tap < 4; ++tap) {
        std::copy(bias.begin(), bias.end(), acc.begin());
        std::int32_t* __restrict a = acc.data();
        const std::int8_t* __restrict wtap = k.values.data() + tap * cin * cout;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          const auto xv = static_cast<std::int16_t>(xin[ci] - zp);
          const std::int8_t* __restrict wrow = wtap + ci * cout;
          for (std::int64_t co = 0; co < cout; ++co) {
            a[co] += static_cast<std::int16_t>(xv * static_cast<std::int16_t>(wrow[co]));
          }
        }
        std::int8_t* dst = y.data.data() + y.index(b, 2 * iy + tap / 2, 2 * ix + tap % 2, 0);
        for (std::int64_t co = 0; co < cout; ++co) {
          dst[co] = saturate(round_half_away(a[co] * m) + out_qp.zero_point);
        }
      }
    }
  });
  return y;
}

QuantTensor qmaxpool2(const QuantTensor& x) {
  const Shape in = x.shape;
  if (in.h <= 0 || in.w <= 0) throw_shape("qmaxpool2: zero-sized input");
  if (in.h % 2 != 0 || in.w % 2 != 0) throw_shape("qmaxpool2: odd spatial dims " + to_string(in));
  const Shape out{in.n, in.h / 2, in.w / 2, in.c};
  QuantTensor y{out, std::vector<std::int8_t>(static_cast<std::size_t>(out.elements())), x.qp};
  for (std::int64_t b = 0; b < in.n; ++b) {
    for (std::int64_t oy = 0; oy < out.h; ++oy) {
      for (std::int64_t ox = 0; ox < out.w; ++ox) {
        for (std::int64_t ch = 0; ch < in.c; ++ch) {
          y.data[static_cast<std::size_t>(y.index(b, oy, ox, ch))] = std::max(
              {x.data[static_cast<std::size_t>(x.index(b, 2 * oy, 2 * ox, ch))],
               x.data[static_cast<std::size_t>(x.index(b, 2 * oy, 2 * ox + 1, ch))],
               x.data[static_cast<std::size_t>(x.index(b, 2 * oy + 1, 2 * ox, ch))],
               x.data[static_cast<std::size_t>(x.index(b, 2 * oy + 1, 2 * ox + 1, ch))]});
        }
      }
    }
  }
  return y;
}

QuantTensor qrelu(const QuantTensor& x) {
  QuantTensor y = x;
  const auto floor = saturate(x.qp.zero_point);
  for (auto& v : y.data) v = std::max(v, floor);
  return y;
}

QuantTensor qconcat(const QuantTensor& a, const QuantTensor& b, const QuantParams& out_qp) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
    throw_shape("qconcat: spatial mismatch");
  }
  const QuantTensor ra = requantize(a, out_qp);
  const QuantTensor rb = requantize(b, out_qp);
  const Shape out{a.shape.n, a.shape.h, a.shape.w, a.shape.c + b.shape.c};
  QuantTensor y{out, {}, out_qp};
  y.data.reserve(static_cast<std::size_t>(out.elements()));
  const std::int64_t pixels = out.n * out.h * out.w;
  for (std::int64_t i = 0; i < pixels; ++i) {
    y.data.insert(y.data.end(), ra.data.begin() + i * a.shape.c, ra.data.begin() + (i + 1) * a.shape.c);
    y.data.insert(y.data.end(), rb.data.begin() + i * b.shape.c, rb.data.begin() + (i + 1) * b.shape.c);
  }
  return y;
}

SigmoidLut::SigmoidLut(const QuantParams& in, const QuantParams& out) : in_(in), out_(out) {
  for (int q = kQMin; q <= kQMax; ++q) {
    const float real = dequantize_value(static_cast<std::int8_t>(q), in_);
    table_[static_cast<std::size_t>(q - kQMin)] = quantize_value(sigmoid(real), out_);
  }
}

QuantTensor SigmoidLut::apply(const QuantTensor& x) const {
  if (!(x.qp == in_)) throw Error(ErrorKind::argument, "sigmoid LUT built for other input params");
  QuantTensor y{x.shape, std::vector<std::int8_t>(x.data.size()), out_};
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = (*this)(x.data[i]);
  return y;
}

}  // namespace uedge
