#include "nirpcc/pointset.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace nirpcc {

namespace {

bool integral_in_range(const PointCloud& cloud, double max_coord) {
  for (const auto& p : cloud.points) {
    for (double c : p) {
      if (!std::isfinite(c) || c < 0.0 || c > max_coord || std::floor(c) != c)
        return false;
    }
  }
  return true;
}

}  // namespace

VoxelCloud voxelize(const PointCloud& cloud, int resolution_bits) {
  if (resolution_bits < 1 || resolution_bits > 16)
    throw DataError("voxelize: resolution_bits must be in 1..16");
  if (cloud.points.empty()) throw DataError("voxelize: empty point cloud");
  for (const auto& p : cloud.points)
    for (double c : p)
      if (!std::isfinite(c)) throw DataError("voxelize: non-finite coordinate");

  const double max_coord = static_cast<double>((1 << resolution_bits) - 1);
  std::array<double, 3> lo{0, 0, 0};
  double scale = 1.0;
  const bool passthrough = integral_in_range(cloud, max_coord);
  if (!passthrough) {
    std::array<double, 3> hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& p : cloud.points) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    // One isotropic scale keeps the shape; the widest axis spans the grid.
    double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    scale = extent > 0.0 ? max_coord / extent : 0.0;
  }

  VoxelCloud out;
  out.resolution_bits = resolution_bits;
  const bool colored = cloud.has_colors();

  std::unordered_map<uint64_t, size_t> slot_of;
  slot_of.reserve(cloud.points.size() * 2);
  std::vector<std::array<uint64_t, 3>> color_sums;
  std::vector<uint64_t> hits;

  for (size_t i = 0; i < cloud.points.size(); ++i) {
    Voxel v;
    for (int a = 0; a < 3; ++a) {
      double c = passthrough ? cloud.points[i][a]
                             : (cloud.points[i][a] - lo[a]) * scale;
      v[a] = static_cast<int32_t>(std::llround(c));  // half away from zero
    }
    auto [it, inserted] = slot_of.try_emplace(voxel_key(v), out.voxels.size());
    if (inserted) {
      out.voxels.push_back(v);
      if (colored) {
        const Color& c = cloud.colors[i];
        color_sums.push_back({c[0], c[1], c[2]});
        hits.push_back(1);
      }
    } else if (colored) {
      const Color& c = cloud.colors[i];
      for (int a = 0; a < 3; ++a) color_sums[it->second][a] += c[a];
      ++hits[it->second];
    }
  }

  if (colored) {
    out.colors.resize(out.voxels.size());
    for (size_t i = 0; i < out.voxels.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        double mean = static_cast<double>(color_sums[i][a]) /
                      static_cast<double>(hits[i]);
        out.colors[i][a] = static_cast<uint8_t>(std::llround(mean));
      }
    }
  }
  return out;
}

PointCloud devoxelize(const VoxelCloud& vox) {
  PointCloud out;
  out.points.reserve(vox.voxels.size());
  for (const Voxel& v : vox.voxels)
    out.points.push_back({static_cast<double>(v[0]), static_cast<double>(v[1]),
                          static_cast<double>(v[2])});
  out.colors = vox.colors;
  return out;
}

}  // namespace nirpcc
