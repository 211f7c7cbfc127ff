#pragma once

#include <span>
#include <string>
#include <vector>

#include "nirpcc/bitstream.hpp"
#include "nirpcc/metrics.hpp"
#include "nirpcc/pointset.hpp"
#include "nirpcc/training.hpp"

namespace nirpcc {

/// Everything cmd_encode needs. Defaults are the full-scale settings
/// (10-bit grids, T=5, L=12, 512x128x512 blocks with 2/3 resblocks,
/// step sizes 1/1024 and 1/4096, 1.2M/200K steps, batch 4096, beta 0.5);
/// the "toy" profile swaps in a desk-scale configuration.
struct EncodeOptions {
  int resolution_bits = 10;
  int cube_bits = 5;
  NetworkConfig geometry_net{3, 1, 12, 2, 512, 128};
  NetworkConfig attribute_net{3, 3, 12, 3, 512, 128};
  int geometry_step_exponent = 10;   // Delta = 1/1024
  int attribute_step_exponent = 12;  // Delta = 1/4096
  TrainConfig train;
  bool geometry_only = false;
  std::vector<double> tau_grid = default_tau_grid();
};

/// Desk-scale profile: N=8, L=6, one 64x32x64 block, 20K/5K steps.
EncodeOptions toy_profile();
/// Full-scale profile (the defaults, spelled out).
EncodeOptions paper_profile();

struct EncodeStats {
  uint64_t input_points = 0;  // unique voxels after voxelization
  uint64_t stream_bytes = 0;
  double bpp = 0.0;
  double tau = 0.0;          // dequantized threshold stored in the stream
  double tau_d1_psnr = 0.0;  // D1 at the chosen tau, pre-quantization model
  double scaling_ratio = 0.0;
  uint64_t reconstructed_points = 0;
  double geometry_seconds = 0.0;
  double attribute_seconds = 0.0;
};

struct EncodeResult {
  std::vector<uint8_t> stream;
  EncodeStats stats;
  std::vector<TraceRow> geometry_trace;
  std::vector<TraceRow> attribute_trace;
};

/// Full encoding pipeline: voxelize, partition, train occupancy, pick tau,
/// reconstruct, train attributes on the reconstruction, quantize both
/// networks, entropy-code, pack the container.
EncodeResult encode_cloud(const PointCloud& cloud, const EncodeOptions& options);

/// Decodes to the voxel grid: parse, decode+dequantize weights, reconstruct
/// occupied voxels, infer colors when present. Fully deterministic.
VoxelCloud decode_stream(std::span<const uint8_t> stream);

/// decode_stream + devoxelize.
PointCloud decode_cloud(std::span<const uint8_t> stream);

/// Writes trace rows as "step,loss,lr" CSV.
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace nirpcc
