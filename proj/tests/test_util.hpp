#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unordered_set>

#include "nirpcc/pointset.hpp"

namespace nirpcc::testing {

inline std::string temp_path(const std::string& name) {
  static const std::string dir = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("nirpcc_tests_" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d.string();
  }();
  return dir + "/" + name;
}

/// Hollow sphere on an N-bit grid with a smooth positional color gradient.
inline PointCloud make_sphere_cloud(int resolution_bits, double radius,
                                    bool colored = true) {
  const int max_coord = (1 << resolution_bits) - 1;
  const double center = max_coord / 2.0;
  PointCloud cloud;
  const int lo = static_cast<int>(std::floor(center - radius - 1));
  const int hi = static_cast<int>(std::ceil(center + radius + 1));
  for (int x = lo; x <= hi; ++x)
    for (int y = lo; y <= hi; ++y)
      for (int z = lo; z <= hi; ++z) {
        const double dx = x - center, dy = y - center, dz = z - center;
        const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (std::abs(dist - radius) > 0.5) continue;
        cloud.points.push_back({double(x), double(y), double(z)});
        if (colored)
          cloud.colors.push_back(
              {uint8_t(std::llround(255.0 * x / max_coord)),
               uint8_t(std::llround(255.0 * y / max_coord)),
               uint8_t(std::llround(255.0 * z / max_coord))});
      }
  return cloud;
}

/// `count` distinct random voxels, optionally with random colors.
inline VoxelCloud random_voxel_cloud(size_t count, int resolution_bits,
                                     uint64_t seed, bool colored = false) {
  Prng rng(seed);
  const uint64_t range = 1ull << resolution_bits;
  VoxelCloud cloud;
  cloud.resolution_bits = resolution_bits;
  std::unordered_set<uint64_t> seen;
  while (cloud.voxels.size() < count) {
    Voxel v{int32_t(rng.next_below(range)), int32_t(rng.next_below(range)),
            int32_t(rng.next_below(range))};
    if (!seen.insert(voxel_key(v)).second) continue;
    cloud.voxels.push_back(v);
    if (colored)
      cloud.colors.push_back({uint8_t(rng.next_below(256)),
                              uint8_t(rng.next_below(256)),
                              uint8_t(rng.next_below(256))});
  }
  return cloud;
}

/// Random voxels confined to [lo, lo+extent)^3: small enough candidate sets
/// that short training runs can memorize them.
inline VoxelCloud clustered_voxel_cloud(size_t count, int resolution_bits,
                                        uint64_t seed, bool colored, int32_t lo,
                                        uint64_t extent) {
  Prng rng(seed);
  VoxelCloud cloud;
  cloud.resolution_bits = resolution_bits;
  std::unordered_set<uint64_t> seen;
  while (cloud.voxels.size() < count) {
    Voxel v{int32_t(lo + rng.next_below(extent)), int32_t(lo + rng.next_below(extent)),
            int32_t(lo + rng.next_below(extent))};
    if (!seen.insert(voxel_key(v)).second) continue;
    cloud.voxels.push_back(v);
    if (colored)
      cloud.colors.push_back({uint8_t(rng.next_below(256)),
                              uint8_t(rng.next_below(256)),
                              uint8_t(rng.next_below(256))});
  }
  return cloud;
}

}  // namespace nirpcc::testing
