#pragma once

#include <vector>

#include "nirpcc/common.hpp"

namespace nirpcc {

/// Raw point cloud: real-valued positions with optional per-point colors.
struct PointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<Color> colors;  // empty, or exactly one triple per point

  bool has_colors() const { return !colors.empty(); }
  size_t size() const { return points.size(); }
};

/// Voxelized cloud: unique integer coordinates on an N-bit grid.
struct VoxelCloud {
  int resolution_bits = 0;  // N; coordinates lie in {0, ..., 2^N - 1}^3
  std::vector<Voxel> voxels;
  std::vector<Color> colors;  // empty, or aligned with voxels

  bool has_colors() const { return !colors.empty(); }
  size_t size() const { return voxels.size(); }
  int32_t max_coordinate() const { return (1 << resolution_bits) - 1; }
};

/// Quantizes a cloud onto the N-bit grid, N in 1..16.
///
/// Clouds whose coordinates are already integral and in range pass through
/// unchanged (so the operation is idempotent); anything else is min-max
/// normalized with a single isotropic scale and rounded half away from zero.
/// Duplicate voxels are merged, first occurrence keeps its slot and the
/// merged color is the rounded per-channel mean of all contributing points.
VoxelCloud voxelize(const PointCloud& cloud, int resolution_bits);

/// Emits voxel coordinates verbatim as floating-point points.
PointCloud devoxelize(const VoxelCloud& vox);

}  // namespace nirpcc
