#include "nirpcc/weight_codec.hpp"

#include <bit>
#include <cmath>

namespace nirpcc {

namespace {

// ---------------------------------------------------------------------------
// Binary range coder. 32-bit range register starting at 0xFFFFFFFF, 64-bit
// low accumulator, byte renormalization once range drops below 2^24, carry
// propagation into already-emitted bytes. A context codes the probability
// of a 1-bin as p/65536 with p in [64, 65472]; the 1-branch owns the lower
// part of the interval. This byte format is normative: every implementation
// must reproduce it exactly.

constexpr uint32_t kTopBit = 1u << 24;
constexpr uint16_t kProbMin = 64;
constexpr uint16_t kProbMax = 65472;
constexpr uint16_t kProbInit = 32768;
constexpr int kProbShift = 5;
constexpr size_t kFlushBytes = 5;

struct Context {
  uint16_t p = kProbInit;

  void update(int bin) {
    if (bin)
      p = static_cast<uint16_t>(p + ((65536 - p) >> kProbShift));
    else
      p = static_cast<uint16_t>(p - (p >> kProbShift));
    if (p < kProbMin) p = kProbMin;
    if (p > kProbMax) p = kProbMax;
  }
};

class RangeEncoder {
 public:
  void encode(int bin, Context& ctx) {
    encode_raw(bin, ctx.p);
    ctx.update(bin);
  }

  void encode_bypass(int bin) { encode_raw(bin, kProbInit); }

  std::vector<uint8_t> finish() {
    for (size_t i = 0; i < kFlushBytes; ++i) shift_low();
    return std::move(out_);
  }

 private:
  void encode_raw(int bin, uint16_t p) {
    const uint32_t split = (range_ >> 16) * p;
    if (bin) {
      range_ = split;
    } else {
      low_ += split;
      range_ -= split;
    }
    while (range_ < kTopBit) shift_low();
  }

  void shift_low() {
    if (low_ >= (1ull << 32)) {
      // Carry into bytes that are already out.
      for (size_t i = out_.size(); i-- > 0;)
        if (++out_[i] != 0) break;
      low_ -= 1ull << 32;
    }
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFull;
    range_ <<= 8;
  }

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFF;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data) : data_(data) {
    for (int i = 0; i < 4; ++i) code_ = code_ << 8 | next_byte();
  }

  int decode(Context& ctx) {
    const int bin = decode_raw(ctx.p);
    ctx.update(bin);
    return bin;
  }

  int decode_bypass() { return decode_raw(kProbInit); }

  size_t consumed() const { return pos_; }

 private:
  int decode_raw(uint16_t p) {
    const uint32_t split = (range_ >> 16) * p;
    int bin;
    if (code_ < split) {
      bin = 1;
      range_ = split;
    } else {
      bin = 0;
      code_ -= split;
      range_ -= split;
    }
    while (range_ < kTopBit) {
      code_ = code_ << 8 | next_byte();
      range_ <<= 8;
    }
    return bin;
  }

  uint8_t next_byte() {
    if (pos_ >= data_.size())
      throw DataError("weight payload: premature end of stream");
    return data_[pos_++];
  }

  std::span<const uint8_t> data_;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFF;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Binarization. Per level k:
//   significance bin (k != 0), one adaptive context per tensor;
//   sign bin in bypass (1 = negative);
//   |k|-1 as truncated unary over 4 adaptive per-position contexts;
//   any remainder |k|-5 as order-0 exp-Golomb in bypass.

constexpr int kUnaryBins = 4;

struct TensorContexts {
  Context significance;
  Context magnitude[kUnaryBins];
};

void encode_eg0(RangeEncoder& rc, uint64_t value) {
  const uint64_t shifted = value + 1;
  const int bits = std::bit_width(shifted);  // codeword is (bits-1) zeros + shifted
  for (int i = 0; i < bits - 1; ++i) rc.encode_bypass(0);
  for (int i = bits - 1; i >= 0; --i)
    rc.encode_bypass(static_cast<int>(shifted >> i & 1));
}

uint64_t decode_eg0(RangeDecoder& rc) {
  int zeros = 0;
  while (rc.decode_bypass() == 0)
    if (++zeros > 62) throw DataError("weight payload: corrupt exp-Golomb prefix");
  uint64_t value = 1;
  for (int i = 0; i < zeros; ++i)
    value = value << 1 | static_cast<uint64_t>(rc.decode_bypass());
  return value - 1;
}

void encode_level(RangeEncoder& rc, TensorContexts& ctx, int32_t level) {
  rc.encode(level != 0, ctx.significance);
  if (level == 0) return;
  rc.encode_bypass(level < 0);
  const uint32_t magnitude =
      (level < 0 ? static_cast<uint32_t>(-int64_t(level)) : static_cast<uint32_t>(level)) - 1;
  for (int i = 0; i < kUnaryBins; ++i) {
    const int more = magnitude > static_cast<uint32_t>(i) ? 1 : 0;
    rc.encode(more, ctx.magnitude[i]);
    if (!more) return;
  }
  if (magnitude >= kUnaryBins) encode_eg0(rc, magnitude - kUnaryBins);
}

int32_t decode_level(RangeDecoder& rc, TensorContexts& ctx) {
  if (!rc.decode(ctx.significance)) return 0;
  const int negative = rc.decode_bypass();
  uint64_t magnitude = 0;
  while (magnitude < kUnaryBins && rc.decode(ctx.magnitude[magnitude])) ++magnitude;
  if (magnitude == kUnaryBins) magnitude += decode_eg0(rc);
  const uint64_t value = magnitude + 1;
  if (value > 0x7FFFFFFFull)
    throw DataError("weight payload: level magnitude overflow");
  return negative ? -static_cast<int32_t>(value) : static_cast<int32_t>(value);
}

}  // namespace

std::vector<size_t> tensor_sizes(const NetworkConfig& config) {
  config.validate();
  std::vector<size_t> sizes;
  auto dense = [&](int out, int in) {
    sizes.push_back(size_t(out) * size_t(in));
    sizes.push_back(size_t(out));
  };
  dense(config.block_outer_width, config.encoded_width());
  for (int b = 0; b < config.num_resblocks; ++b) {
    dense(config.block_inner_width, config.block_outer_width);
    dense(config.block_outer_width, config.block_inner_width);
  }
  dense(config.out_channels, config.block_outer_width);
  return sizes;
}

QuantizedModel quantize(const NetworkModel& model, int step_exponent) {
  if (step_exponent < 1 || step_exponent > 20)
    throw DataError("quantize: step_exponent must be in 1..20");
  const double scale = std::ldexp(1.0, step_exponent);  // 1/Delta
  QuantizedModel qm;
  qm.config = model.config;
  qm.step_exponent = step_exponent;
  auto quantize_one = [&](double value) {
    // Narrow to float32 first: stored weights are single precision.
    const double q = double(float(value));
    if (!std::isfinite(q)) throw DataError("quantize: non-finite parameter");
    const long long k = std::llround(q * scale);
    if (k >= 0x80000000LL || k <= -0x80000000LL)
      throw DataError("quantize: level magnitude overflow");
    return static_cast<int32_t>(k);
  };
  for (const DenseLayer& layer : model.layers) {
    const auto& w = layer.weights;
    std::vector<int32_t> levels;
    levels.reserve(size_t(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)  // row-major order
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        levels.push_back(quantize_one(w(r, c)));
    qm.tensors.push_back(std::move(levels));
    std::vector<int32_t> bias_levels;
    bias_levels.reserve(size_t(layer.bias.size()));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      bias_levels.push_back(quantize_one(layer.bias(i)));
    qm.tensors.push_back(std::move(bias_levels));
  }
  return qm;
}

NetworkModel dequantize(const QuantizedModel& qm) {
  qm.config.validate();
  const std::vector<size_t> sizes = tensor_sizes(qm.config);
  if (qm.tensors.size() != sizes.size())
    throw DataError("dequantize: tensor count mismatch");
  const double delta = std::ldexp(1.0, -qm.step_exponent);

  NetworkModel model = init_model(qm.config, 0);  // shapes only; values replaced
  size_t t = 0;
  for (DenseLayer& layer : model.layers) {
    const auto& levels = qm.tensors[t];
    if (levels.size() != sizes[t])
      throw DataError("dequantize: tensor size mismatch");
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
      layer.weights(i / layer.weights.cols(), i % layer.weights.cols()) =
          double(levels[size_t(i)]) * delta;
    ++t;
    const auto& bias_levels = qm.tensors[t];
    if (bias_levels.size() != sizes[t])
      throw DataError("dequantize: tensor size mismatch");
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      layer.bias(i) = double(bias_levels[size_t(i)]) * delta;
    ++t;
  }
  return model;
}

std::vector<uint8_t> encode_level_arrays(
    const std::vector<std::vector<int32_t>>& tensors) {
  RangeEncoder rc;
  for (const auto& tensor : tensors) {
    TensorContexts ctx;  // contexts reset per tensor
    for (int32_t level : tensor) encode_level(rc, ctx, level);
  }
  return rc.finish();
}

std::vector<std::vector<int32_t>> decode_level_arrays(
    std::span<const uint8_t> payload, const std::vector<size_t>& sizes) {
  RangeDecoder rc(payload);
  std::vector<std::vector<int32_t>> tensors;
  tensors.reserve(sizes.size());
  for (size_t size : sizes) {
    TensorContexts ctx;
    std::vector<int32_t> levels(size);
    for (size_t i = 0; i < size; ++i) levels[i] = decode_level(rc, ctx);
    tensors.push_back(std::move(levels));
  }
  // A well-formed payload always leaves exactly one flush byte unread.
  if (rc.consumed() != payload.size() - 1)
    throw DataError("weight payload: length does not match content");
  return tensors;
}

std::vector<uint8_t> encode_levels(const QuantizedModel& qm) {
  return encode_level_arrays(qm.tensors);
}

QuantizedModel decode_levels(std::span<const uint8_t> payload,
                             const NetworkConfig& config, int step_exponent) {
  QuantizedModel qm;
  qm.config = config;
  qm.step_exponent = step_exponent;
  qm.tensors = decode_level_arrays(payload, tensor_sizes(config));
  return qm;
}

}  // namespace nirpcc
