#include "uedge/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace uedge {

namespace {

struct Netpbm {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::span<const std::uint8_t> pixels;
};

FormatError bad(const std::filesystem::path& path, const std::string& msg) {
  return FormatError(FormatErrorCode::bad_header, path.string() + ": " + msg);
}

// Parses a binary netpbm header of the given magic ("P5" / "P6").
Netpbm parse_netpbm(const std::vector<std::uint8_t>& bytes, std::string_view magic,
                    std::int64_t channels, const std::filesystem::path& path) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw bad(path, "expected a binary " + std::string(magic) + " netpbm file");
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::int64_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw bad(path, "malformed header");
    std::int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 24)) throw bad(path, "header value too large");
      ++pos;
    }
    return v;
  };
  Netpbm img;
  img.width = next_number();
  img.height = next_number();
  const std::int64_t maxval = next_number();
  if (maxval != 255) throw bad(path, "only 8-bit depth (maxval 255) is supported");
  if (img.width <= 0 || img.height <= 0) throw bad(path, "zero-sized image");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw bad(path, "malformed header");
  ++pos;
  const auto expected = static_cast<std::size_t>(img.width * img.height * channels);
  if (bytes.size() - pos < expected) {
    throw FormatError(FormatErrorCode::truncated, path.string() + ": pixel data truncated");
  }
  img.pixels = std::span<const std::uint8_t>(bytes).subspan(pos, expected);
  return img;
}

std::vector<std::uint8_t> header(std::string_view magic, std::int64_t w, std::int64_t h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
}

Tensor read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Netpbm img = parse_netpbm(bytes, "P6", 3, path);
  Tensor t({1, img.height, img.width, 3});
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return t;
}

Tensor read_image(const std::filesystem::path& path, const InputSize& expected) {
  Tensor t = read_image(path);
  const Shape& s = t.shape();
  if (s.h != expected.height || s.w != expected.width || s.c != expected.channels) {
    throw_shape(path.string() + ": image " + std::to_string(s.h) + "x" + std::to_string(s.w) + "x" +
                std::to_string(s.c) + " does not match model input " +
                std::to_string(expected.height) + "x" + std::to_string(expected.width) + "x" +
                std::to_string(expected.channels));
  }
  return t;
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw_shape("write_image: expected a (1, H, W, 3) tensor");
  auto bytes = header("P6", s.w, s.h);
  for (float v : image.data()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    bytes.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
  }
  write_file(path, bytes);
}

Mask read_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Netpbm img = parse_netpbm(bytes, "P5", 1, path);
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = img.pixels[i] != 0 ? 1 : 0;
  return m;
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
  auto bytes = header("P5", m.width, m.height);
  for (std::uint8_t v : m.data) bytes.push_back(v != 0 ? 255 : 0);
  write_file(path, bytes);
}

}  // namespace uedge
