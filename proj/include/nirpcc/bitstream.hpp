#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nirpcc/network.hpp"
#include "nirpcc/spatial.hpp"

namespace nirpcc {

enum class BitstreamErrorKind {
  BadMagic,
  UnknownVersion,
  UnknownFlags,
  LengthMismatch,
  TrailingBytes,
  FieldRange,
};

class BitstreamError : public DataError {
 public:
  BitstreamError(BitstreamErrorKind kind, const std::string& message)
      : DataError(message), kind_(kind) {}
  BitstreamErrorKind kind() const { return kind_; }

 private:
  BitstreamErrorKind kind_;
};

/// Architecture and quantization fields stored per weight stream.
struct WeightStreamHeader {
  uint8_t num_frequencies = 0;
  uint8_t num_resblocks = 0;
  uint16_t outer_width = 0;
  uint16_t inner_width = 0;
  uint8_t step_exponent = 0;

  bool operator==(const WeightStreamHeader&) const = default;
};

/// The self-contained "NIRP" container. Layout (all integers little-endian):
///   magic "NIRP" | version u8 | flags u8 (bit0 = has attributes)
///   N u8 | T u8 | tau_q u16 (tau = tau_q / 65535)
///   geometry header (L u8, blocks u8, outer u16, inner u16, step_exp u8)
///   attribute header (same shape, present iff flag bit0)
///   cube bitmap, ceil(2^(3T) / 8) bytes, Morton indexed, LSB-first per byte
///   geometry payload: u32 length + bytes
///   attribute payload: u32 length + bytes (present iff flag bit0)
struct CompressedCloud {
  uint8_t version = 1;
  bool has_attributes = false;
  uint8_t resolution_bits = 0;  // N
  uint8_t cube_bits = 0;        // T
  uint16_t tau_q = 0;
  WeightStreamHeader geometry;
  WeightStreamHeader attribute;  // meaningful iff has_attributes
  std::vector<uint8_t> cube_bitmap;
  std::vector<uint8_t> geometry_payload;
  std::vector<uint8_t> attribute_payload;  // empty iff !has_attributes

  double tau() const { return double(tau_q) / 65535.0; }

  bool operator==(const CompressedCloud&) const = default;
};

std::vector<uint8_t> serialize(const CompressedCloud& cloud);
CompressedCloud parse(std::span<const uint8_t> bytes);

/// Expected bitmap byte count for a cube exponent T.
size_t cube_bitmap_bytes(int cube_bits);

std::vector<uint8_t> cube_bitmap_from_partition(const Partition& partition);
Partition partition_from_bitmap(const std::vector<uint8_t>& bitmap,
                                int resolution_bits, int cube_bits);

WeightStreamHeader make_weight_header(const NetworkConfig& config, int step_exponent);
NetworkConfig network_config_from_header(const WeightStreamHeader& header,
                                         int out_channels);

}  // namespace nirpcc
