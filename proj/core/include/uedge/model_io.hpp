#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uedge/engine.hpp"
#include "uedge/quant.hpp"
#include "uedge/unet.hpp"

// UEW weight files. Byte layout (all integers little-endian):
//
//   "UEW1"                      4 bytes magic
//   version                     u16 (currently 1)
//   spec string                 u32 length + UTF-8 bytes
//   flags                       u32, bit 0 set for quantized files
//   tensor count                u32
//   per tensor:
//     name                      u32 length + UTF-8 bytes
//     dtype                     u8  (0 float32, 1 int8, 2 int32)
//     rank                      u8
//     dims                      u32 x rank
//     has_qparams               u8  (0 or 1)
//     [scale f64, zero_point i32]   when has_qparams == 1
//     payload                   product(dims) x sizeof(dtype)
//   checksum                    u32 CRC-32 (IEEE) of every preceding byte
//
// docs/uew_format.md carries the full description.
namespace uedge::uew {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint32_t kFlagQuantized = 1u;
inline constexpr std::uint8_t kMaxRank = 8;

// Quantized files carry activation parameters as zero-element int8
// tensors named act/<tensor>; both kinds carry meta/provenance as UTF-8.
inline constexpr std::string_view kActivationPrefix = "act/";
inline constexpr std::string_view kProvenanceTensor = "meta/provenance";

enum class DType : std::uint8_t { float32 = 0, int8 = 1, int32 = 2 };

std::size_t dtype_size(DType t) noexcept;

struct Entry {
  std::string name;
  DType dtype = DType::float32;
  std::vector<std::uint32_t> dims;
  std::optional<QuantParams> qparams;
  std::vector<std::uint8_t> payload;

  std::uint64_t elements() const noexcept;
  friend bool operator==(const Entry&, const Entry&) = default;
};

struct File {
  std::uint16_t version = kVersion;
  std::string spec;
  std::uint32_t flags = 0;
  std::vector<Entry> entries;

  bool quantized() const noexcept { return (flags & kFlagQuantized) != 0; }
  friend bool operator==(const File&, const File&) = default;
};

std::vector<std::uint8_t> encode(const File& f);
// Throws FormatError with a distinct code per failure mode.
File decode(std::span<const std::uint8_t> bytes);

std::uint32_t checksum(std::span<const std::uint8_t> bytes);

File to_file(const WeightSet& w);
File to_file(const QuantWeightSet& q);
WeightSet to_weight_set(const File& f);
QuantWeightSet to_quant_weight_set(const File& f);

}  // namespace uedge::uew

namespace uedge {

struct LoadedWeights {
  ModelSpec spec;
  std::variant<WeightSet, QuantWeightSet> weights;

  bool quantized() const noexcept { return std::holds_alternative<QuantWeightSet>(weights); }
};

void write_weights(const std::filesystem::path& path, const WeightSet& w);
void write_weights(const std::filesystem::path& path, const QuantWeightSet& q);
LoadedWeights read_weights(const std::filesystem::path& path);

}  // namespace uedge
