#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nirpcc/network.hpp"

namespace nirpcc {

/// Uniformly quantized network: integer level k per parameter with step
/// Delta = 2^-step_exponent, so the dequantized value k * Delta is exact in
/// double precision. Tensor order mirrors the model: per dense layer, the
/// weight matrix in row-major order, then the bias vector.
struct QuantizedModel {
  NetworkConfig config;
  int step_exponent = 10;  // Delta = 2^-e, e in 1..20
  std::vector<std::vector<int32_t>> tensors;
};

/// Flat element counts of the tensors in serialization order.
std::vector<size_t> tensor_sizes(const NetworkConfig& config);

/// k = round-half-away-from-zero(q / Delta). Parameters pass through
/// float32 first; training keeps doubles but the codec sees single
/// precision. Throws on |k| >= 2^31.
QuantizedModel quantize(const NetworkModel& model, int step_exponent);

/// q_hat = k * 2^-e. quantize(dequantize(qm)) == qm.
NetworkModel dequantize(const QuantizedModel& qm);

/// Entropy-codes integer levels with a context-adaptive binary range coder.
/// The byte output is normative and platform-independent; see
/// docs/FORMAT.md for the bin layout and coder state machine.
std::vector<uint8_t> encode_level_arrays(
    const std::vector<std::vector<int32_t>>& tensors);

/// Exact inverse of encode_level_arrays. Throws DataError on truncated or
/// oversized payloads.
std::vector<std::vector<int32_t>> decode_level_arrays(
    std::span<const uint8_t> payload, const std::vector<size_t>& sizes);

std::vector<uint8_t> encode_levels(const QuantizedModel& qm);
QuantizedModel decode_levels(std::span<const uint8_t> payload,
                             const NetworkConfig& config, int step_exponent);

}  // namespace nirpcc
