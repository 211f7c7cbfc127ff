#include "nirpcc/bitstream.hpp"

#include <algorithm>

namespace nirpcc {

namespace {

constexpr char kMagic[4] = {'N', 'I', 'R', 'P'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kFlagHasAttributes = 0x01;

[[noreturn]] void fail(BitstreamErrorKind kind, const std::string& msg) {
  throw BitstreamError(kind, msg);
}

struct Writer {
  std::vector<uint8_t> out;

  void u8(uint8_t v) { out.push_back(v); }
  void u16(uint16_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
  }
  void bytes(std::span<const uint8_t> data) {
    out.insert(out.end(), data.begin(), data.end());
  }
};

struct Reader {
  std::span<const uint8_t> data;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    if (pos + n > data.size())
      fail(BitstreamErrorKind::LengthMismatch,
           std::string("container: truncated while reading ") + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return data[pos++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(data[pos]) | uint16_t(data[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::vector<uint8_t> bytes(size_t n, const char* what) {
    need(n, what);
    std::vector<uint8_t> v(data.begin() + pos, data.begin() + pos + n);
    pos += n;
    return v;
  }
};

void write_weight_header(Writer& w, const WeightStreamHeader& h) {
  w.u8(h.num_frequencies);
  w.u8(h.num_resblocks);
  w.u16(h.outer_width);
  w.u16(h.inner_width);
  w.u8(h.step_exponent);
}

WeightStreamHeader read_weight_header(Reader& r, const char* which) {
  WeightStreamHeader h;
  h.num_frequencies = r.u8(which);
  h.num_resblocks = r.u8(which);
  h.outer_width = r.u16(which);
  h.inner_width = r.u16(which);
  h.step_exponent = r.u8(which);
  if (h.num_resblocks < 1 || h.outer_width < 1 || h.inner_width < 1 ||
      h.step_exponent < 1 || h.step_exponent > 20)
    fail(BitstreamErrorKind::FieldRange,
         std::string("container: invalid ") + which + " network header");
  return h;
}

void validate_common(const CompressedCloud& c) {
  if (c.resolution_bits < 1 || c.resolution_bits > 16)
    fail(BitstreamErrorKind::FieldRange, "container: resolution bits out of range");
  if (c.cube_bits > c.resolution_bits)
    fail(BitstreamErrorKind::FieldRange, "container: cube bits exceed resolution");
  if (c.cube_bitmap.size() != cube_bitmap_bytes(c.cube_bits))
    fail(BitstreamErrorKind::LengthMismatch, "container: cube bitmap size mismatch");
}

}  // namespace

size_t cube_bitmap_bytes(int cube_bits) {
  const uint64_t bits = 1ull << (3 * cube_bits);
  return size_t((bits + 7) / 8);
}

std::vector<uint8_t> serialize(const CompressedCloud& cloud) {
  validate_common(cloud);
  if (cloud.version != kVersion)
    fail(BitstreamErrorKind::UnknownVersion, "container: unsupported version");
  if (cloud.geometry_payload.size() > 0xFFFFFFFFull ||
      cloud.attribute_payload.size() > 0xFFFFFFFFull)
    fail(BitstreamErrorKind::FieldRange, "container: payload too large");

  Writer w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u8(cloud.version);
  w.u8(cloud.has_attributes ? kFlagHasAttributes : 0);
  w.u8(cloud.resolution_bits);
  w.u8(cloud.cube_bits);
  w.u16(cloud.tau_q);
  write_weight_header(w, cloud.geometry);
  if (cloud.has_attributes) write_weight_header(w, cloud.attribute);
  w.bytes(cloud.cube_bitmap);
  w.u32(uint32_t(cloud.geometry_payload.size()));
  w.bytes(cloud.geometry_payload);
  if (cloud.has_attributes) {
    w.u32(uint32_t(cloud.attribute_payload.size()));
    w.bytes(cloud.attribute_payload);
  }
  return std::move(w.out);
}

CompressedCloud parse(std::span<const uint8_t> bytes) {
  Reader r{bytes};
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic))
    fail(BitstreamErrorKind::BadMagic, "container: bad magic");

  CompressedCloud c;
  c.version = r.u8("version");
  if (c.version != kVersion)
    fail(BitstreamErrorKind::UnknownVersion,
         "container: unknown version " + std::to_string(c.version));
  const uint8_t flags = r.u8("flags");
  if (flags & ~kFlagHasAttributes)
    fail(BitstreamErrorKind::UnknownFlags, "container: unknown flag bits set");
  c.has_attributes = flags & kFlagHasAttributes;
  c.resolution_bits = r.u8("resolution bits");
  c.cube_bits = r.u8("cube bits");
  c.tau_q = r.u16("tau");
  c.geometry = read_weight_header(r, "geometry");
  if (c.has_attributes) c.attribute = read_weight_header(r, "attribute");

  if (c.resolution_bits < 1 || c.resolution_bits > 16)
    fail(BitstreamErrorKind::FieldRange, "container: resolution bits out of range");
  if (c.cube_bits > c.resolution_bits)
    fail(BitstreamErrorKind::FieldRange, "container: cube bits exceed resolution");

  c.cube_bitmap = r.bytes(cube_bitmap_bytes(c.cube_bits), "cube bitmap");
  const uint32_t geom_len = r.u32("geometry payload length");
  c.geometry_payload = r.bytes(geom_len, "geometry payload");
  if (c.has_attributes) {
    const uint32_t attr_len = r.u32("attribute payload length");
    c.attribute_payload = r.bytes(attr_len, "attribute payload");
  }
  if (r.pos != bytes.size())
    fail(BitstreamErrorKind::TrailingBytes,
         "container: " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
  return c;
}

std::vector<uint8_t> cube_bitmap_from_partition(const Partition& partition) {
  std::vector<uint8_t> bitmap(cube_bitmap_bytes(partition.cube_bits), 0);
  for (const Voxel& cube : partition.cubes) {
    const uint64_t index = morton_encode(cube);
    bitmap[index >> 3] |= uint8_t(1u << (index & 7));
  }
  return bitmap;
}

Partition partition_from_bitmap(const std::vector<uint8_t>& bitmap,
                                int resolution_bits, int cube_bits) {
  if (bitmap.size() != cube_bitmap_bytes(cube_bits))
    fail(BitstreamErrorKind::LengthMismatch, "container: cube bitmap size mismatch");
  Partition p;
  p.resolution_bits = resolution_bits;
  p.cube_bits = cube_bits;
  const uint64_t total = 1ull << (3 * cube_bits);
  for (uint64_t index = 0; index < total; ++index)
    if (bitmap[index >> 3] >> (index & 7) & 1)
      p.cubes.push_back(morton_decode(index));  // ascending Morton order
  return p;
}

WeightStreamHeader make_weight_header(const NetworkConfig& config,
                                      int step_exponent) {
  config.validate();
  if (config.num_frequencies > 255 || config.num_resblocks > 255 ||
      config.block_outer_width > 65535 || config.block_inner_width > 65535)
    fail(BitstreamErrorKind::FieldRange,
         "container: network config field not representable");
  if (step_exponent < 1 || step_exponent > 20)
    fail(BitstreamErrorKind::FieldRange, "container: step exponent out of range");
  WeightStreamHeader h;
  h.num_frequencies = uint8_t(config.num_frequencies);
  h.num_resblocks = uint8_t(config.num_resblocks);
  h.outer_width = uint16_t(config.block_outer_width);
  h.inner_width = uint16_t(config.block_inner_width);
  h.step_exponent = uint8_t(step_exponent);
  return h;
}

NetworkConfig network_config_from_header(const WeightStreamHeader& header,
                                         int out_channels) {
  NetworkConfig config;
  config.in_channels = 3;
  config.out_channels = out_channels;
  config.num_frequencies = header.num_frequencies;
  config.num_resblocks = header.num_resblocks;
  config.block_outer_width = header.outer_width;
  config.block_inner_width = header.inner_width;
  return config;
}

}  // namespace nirpcc
