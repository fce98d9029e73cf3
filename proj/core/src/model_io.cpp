#include "uedge/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include <zlib.h>

#include "uedge/image_io.hpp"

namespace uedge::uew {

namespace {

constexpr std::uint8_t kMagic[4] = {'U', 'E', 'W', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(std::string_view s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError(FormatErrorCode::bad_content, "string too long");
    }
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& view() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > b_.size() - pos_) throw FormatError(FormatErrorCode::truncated, "unexpected end of file");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint() {
    const auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    const auto s = take(n);
    return {s.begin(), s.end()};
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

// Unsigned carrier of the same width as T.
template <typename T>
using Bits = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                                std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;

template <typename T>
std::vector<std::uint8_t> pack(std::span<const T> values) {
  Writer w;
  for (T v : values) {
    w.uint(std::bit_cast<Bits<T>>(v));
  }
  return w.take();
}

template <typename T>
std::vector<T> unpack(const Entry& e) {
  if (dtype_size(e.dtype) != sizeof(T)) {
    throw FormatError(FormatErrorCode::bad_content, "tensor '" + e.name + "' has unexpected dtype");
  }
  Reader r(e.payload);
  std::vector<T> out(static_cast<std::size_t>(e.elements()));
  for (T& v : out) {
    v = std::bit_cast<T>(r.uint<Bits<T>>());
  }
  return out;
}

std::vector<std::uint32_t> to_dims(const std::vector<std::int64_t>& dims) {
  std::vector<std::uint32_t> out;
  for (auto d : dims) {
    if (d < 0 || d > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError(FormatErrorCode::bad_content, "dimension out of u32 range");
    }
    out.push_back(static_cast<std::uint32_t>(d));
  }
  return out;
}

std::vector<std::int64_t> from_dims(const std::vector<std::uint32_t>& dims) {
  return {dims.begin(), dims.end()};
}

Entry provenance_entry(const std::string& text) {
  Entry e{std::string(kProvenanceTensor), DType::int8, {static_cast<std::uint32_t>(text.size())}, {}, {}};
  e.payload.assign(text.begin(), text.end());
  return e;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::string layer_of(const std::string& name, std::string_view suffix) {
  return name.substr(0, name.size() - suffix.size());
}

}  // namespace

std::size_t dtype_size(DType t) noexcept {
  switch (t) {
    case DType::float32: return 4;
    case DType::int8: return 1;
    case DType::int32: return 4;
  }
  return 0;
}

std::uint64_t Entry::elements() const noexcept {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::uint32_t checksum(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const File& f) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint(f.version);
  w.str(f.spec);
  w.uint(f.flags);
  w.uint(static_cast<std::uint32_t>(f.entries.size()));
  for (const Entry& e : f.entries) {
    if (e.dims.size() > kMaxRank) throw FormatError(FormatErrorCode::bad_content, "rank too large");
    if (e.payload.size() != e.elements() * dtype_size(e.dtype)) {
      throw FormatError(FormatErrorCode::size_mismatch, "payload of '" + e.name + "' does not match dims");
    }
    w.str(e.name);
    w.uint(static_cast<std::uint8_t>(e.dtype));
    w.uint(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.uint(d);
    w.uint(static_cast<std::uint8_t>(e.qparams ? 1 : 0));
    if (e.qparams) {
      w.uint(std::bit_cast<std::uint64_t>(e.qparams->scale));
      w.uint(static_cast<std::uint32_t>(e.qparams->zero_point));
    }
    w.bytes(e.payload.data(), e.payload.size());
  }
  w.uint(checksum(w.view()));
  return w.take();
}

File decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic) {
    throw FormatError(FormatErrorCode::truncated, "file shorter than the magic number");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(FormatErrorCode::bad_magic, "not a UEW file (bad magic)");
  }
  Reader r(bytes);
  r.take(sizeof kMagic);
  File f;
  f.version = r.uint<std::uint16_t>();
  if (f.version != kVersion) {
    throw FormatError(FormatErrorCode::unsupported_version,
                      "unsupported UEW version " + std::to_string(f.version));
  }
  f.spec = r.str();
  f.flags = r.uint<std::uint32_t>();
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str();
    const auto dtype = r.uint<std::uint8_t>();
    if (dtype > 2) {
      throw FormatError(FormatErrorCode::bad_dtype, "tensor '" + e.name + "' has dtype code " +
                                                        std::to_string(dtype));
    }
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.uint<std::uint8_t>();
    if (rank > kMaxRank) throw FormatError(FormatErrorCode::bad_header, "tensor rank too large");
    for (std::uint8_t k = 0; k < rank; ++k) e.dims.push_back(r.uint<std::uint32_t>());
    const auto has_qp = r.uint<std::uint8_t>();
    if (has_qp > 1) throw FormatError(FormatErrorCode::bad_header, "bad quantization flag");
    if (has_qp == 1) {
      QuantParams qp;
      qp.scale = std::bit_cast<double>(r.uint<std::uint64_t>());
      qp.zero_point = static_cast<std::int32_t>(r.uint<std::uint32_t>());
      if (!std::isfinite(qp.scale) || qp.scale <= 0.0) {
        throw FormatError(FormatErrorCode::bad_header, "non-positive scale for '" + e.name + "'");
      }
      e.qparams = qp;
    }
    const std::uint64_t n = e.elements();
    if (n > bytes.size()) throw FormatError(FormatErrorCode::truncated, "payload of '" + e.name + "' runs past end");
    const auto payload = r.take(static_cast<std::size_t>(n * dtype_size(e.dtype)));
    e.payload.assign(payload.begin(), payload.end());
    f.entries.push_back(std::move(e));
  }
  const std::size_t body = r.pos();
  const std::size_t rest = bytes.size() - body;
  if (rest < 4) throw FormatError(FormatErrorCode::truncated, "missing checksum");
  if (rest > 4) throw FormatError(FormatErrorCode::trailing_bytes, "unexpected bytes after tensor table");
  const auto stored = r.uint<std::uint32_t>();
  if (stored != checksum(bytes.first(body))) {
    throw FormatError(FormatErrorCode::checksum_mismatch, "checksum mismatch");
  }
  std::set<std::string> names;
  for (const Entry& e : f.entries) {
    if (!names.insert(e.name).second) {
      throw FormatError(FormatErrorCode::duplicate_name, "duplicate tensor name '" + e.name + "'");
    }
  }
  try {
    parse_spec(f.spec);
  } catch (const Error& err) {
    throw FormatError(FormatErrorCode::bad_content, std::string("spec string: ") + err.what());
  }
  return f;
}

File to_file(const WeightSet& w) {
  File f;
  f.spec = w.spec;
  f.entries.push_back(provenance_entry(w.provenance));
  for (const auto& [name, t] : w.tensors) {
    Entry e{name, DType::float32, to_dims(t.dims), std::nullopt,
            pack<float>(std::span<const float>(t.values))};
    if (e.payload.size() != e.elements() * 4) {
      throw FormatError(FormatErrorCode::size_mismatch, "tensor '" + name + "' values do not match dims");
    }
    f.entries.push_back(std::move(e));
  }
  return f;
}

File to_file(const QuantWeightSet& q) {
  File f;
  f.spec = q.spec;
  f.flags = kFlagQuantized;
  f.entries.push_back(provenance_entry(q.provenance));
  for (const auto& [name, a] : q.activations) {
    f.entries.push_back({std::string(kActivationPrefix) + name, DType::int8, {0}, a, {}});
  }
  for (const auto& [name, l] : q.layers) {
    const auto& k = l.kernel;
    f.entries.push_back({kernel_name(name), DType::int8, to_dims({k.kh, k.kw, k.c_in, k.c_out}), k.qp,
                         pack<std::int8_t>(std::span<const std::int8_t>(k.values))});
    f.entries.push_back({bias_name(name), DType::int32, to_dims({static_cast<std::int64_t>(l.bias.size())}),
                         l.bias_qp, pack<std::int32_t>(std::span<const std::int32_t>(l.bias))});
  }
  return f;
}

WeightSet to_weight_set(const File& f) {
  if (f.quantized()) throw FormatError(FormatErrorCode::bad_content, "file holds quantized weights");
  WeightSet w;
  w.spec = f.spec;
  for (const Entry& e : f.entries) {
    if (e.name == kProvenanceTensor) {
      w.provenance.assign(e.payload.begin(), e.payload.end());
      continue;
    }
    if (e.dtype != DType::float32 || e.qparams) {
      throw FormatError(FormatErrorCode::bad_content, "float file has non-float tensor '" + e.name + "'");
    }
    w.tensors[e.name] = {from_dims(e.dims), unpack<float>(e)};
  }
  return w;
}

QuantWeightSet to_quant_weight_set(const File& f) {
  if (!f.quantized()) throw FormatError(FormatErrorCode::bad_content, "file holds float weights");
  QuantWeightSet q;
  q.spec = f.spec;
  for (const Entry& e : f.entries) {
    if (e.name == kProvenanceTensor) {
      q.provenance.assign(e.payload.begin(), e.payload.end());
      continue;
    }
    if (!e.qparams) {
      throw FormatError(FormatErrorCode::bad_content, "quantized tensor '" + e.name + "' lacks parameters");
    }
    if (starts_with(e.name, kActivationPrefix)) {
      q.activations[e.name.substr(kActivationPrefix.size())] = *e.qparams;
    } else if (e.name.ends_with(".kernel")) {
      if (e.dtype != DType::int8 || e.dims.size() != 4) {
        throw FormatError(FormatErrorCode::bad_content, "kernel '" + e.name + "' must be rank-4 int8");
      }
      QuantKernel& k = q.layers[layer_of(e.name, ".kernel")].kernel;
      k.kh = e.dims[0];
      k.kw = e.dims[1];
      k.c_in = e.dims[2];
      k.c_out = e.dims[3];
      k.values = unpack<std::int8_t>(e);
      k.qp = *e.qparams;
    } else if (e.name.ends_with(".bias")) {
      if (e.dtype != DType::int32 || e.dims.size() != 1) {
        throw FormatError(FormatErrorCode::bad_content, "bias '" + e.name + "' must be rank-1 int32");
      }
      QuantLayer& l = q.layers[layer_of(e.name, ".bias")];
      l.bias = unpack<std::int32_t>(e);
      l.bias_qp = *e.qparams;
    } else {
      throw FormatError(FormatErrorCode::bad_content, "unexpected tensor '" + e.name + "' in quantized file");
    }
  }
  return q;
}

}  // namespace uedge::uew

namespace uedge {

void write_weights(const std::filesystem::path& path, const WeightSet& w) {
  write_file(path, uew::encode(uew::to_file(w)));
}

void write_weights(const std::filesystem::path& path, const QuantWeightSet& q) {
  write_file(path, uew::encode(uew::to_file(q)));
}

LoadedWeights read_weights(const std::filesystem::path& path) {
  const uew::File f = uew::decode(read_file(path));
  LoadedWeights out{parse_spec(f.spec), WeightSet{}};
  if (f.quantized()) {
    out.weights = uew::to_quant_weight_set(f);
  } else {
    out.weights = uew::to_weight_set(f);
  }
  return out;
}

}  // namespace uedge
