#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unordered_set>

#include "nirpcc/spatial.hpp"
#include "test_util.hpp"

using namespace nirpcc;

namespace {
// Bit-by-bit reference for the magic-constant implementations.
uint64_t morton_reference(const Voxel& v) {
  uint64_t code = 0;
  for (int bit = 0; bit < 21; ++bit)
    for (int axis = 0; axis < 3; ++axis)
      code |= uint64_t(v[axis] >> bit & 1) << (3 * bit + axis);
  return code;
}
}  // namespace

TEST_CASE("morton encode/decode round trip matches the bitwise reference") {
  Prng rng(1);
  for (int i = 0; i < 2000; ++i) {
    Voxel v{int32_t(rng.next_below(1 << 16)), int32_t(rng.next_below(1 << 16)),
            int32_t(rng.next_below(1 << 16))};
    CHECK(morton_encode(v) == morton_reference(v));
    CHECK(morton_decode(morton_encode(v)) == v);
  }
}

TEST_CASE("cube_of divides by the cube size") {
  CHECK(cube_of({0, 0, 0}, 10, 5) == Voxel{0, 0, 0});
  CHECK(cube_of({1023, 0, 512}, 10, 5) == Voxel{31, 0, 16});
  CHECK(cube_of({7, 7, 7}, 3, 3) == Voxel{7, 7, 7});
}

TEST_CASE("build_partition finds exactly the non-empty cubes") {
  VoxelCloud vox;
  vox.resolution_bits = 6;
  vox.voxels = {{5, 5, 5}};
  CHECK(build_partition(vox, 2).cubes.size() == 1);

  // A full cube of voxels still maps to one partition cube.
  vox.voxels.clear();
  for (int x = 16; x < 32; ++x)
    for (int y = 16; y < 32; ++y)
      for (int z = 16; z < 32; ++z) vox.voxels.push_back({x, y, z});
  Partition p = build_partition(vox, 2);
  CHECK(p.cubes.size() == 1);
  CHECK(p.candidate_count() == 1ull << (3 * 4));

  // T=5 on a 10-bit cloud gives 32-voxel cubes.
  VoxelCloud ten = nirpcc::testing::random_voxel_cloud(100, 10, 5);
  Partition p10 = build_partition(ten, 5);
  CHECK(p10.local_bits() == 5);
  CHECK(p10.voxels_per_cube() == 32ull * 32 * 32);
}

TEST_CASE("every occupied voxel lands in a partition cube") {
  VoxelCloud vox = nirpcc::testing::random_voxel_cloud(2000, 8, 17);
  Partition p = build_partition(vox, 3);
  std::unordered_set<uint64_t> cube_keys;
  for (const Voxel& c : p.cubes) cube_keys.insert(voxel_key(c));
  for (const Voxel& v : vox.voxels)
    CHECK(cube_keys.contains(voxel_key(cube_of(v, 8, 3))));
}

TEST_CASE("candidate enumeration yields each cube voxel exactly once") {
  VoxelCloud vox;
  vox.resolution_bits = 4;
  vox.voxels = {{0, 0, 0}, {15, 15, 15}};  // two distinct cubes at T=3
  Partition p = build_partition(vox, 3);
  REQUIRE(p.cubes.size() == 2);

  std::vector<Voxel> seen;
  for (Voxel v : CandidateRange(p)) seen.push_back(v);
  CHECK(seen.size() == p.candidate_count());
  CHECK(seen.size() == 16);

  // Set equality against the brute-force double loop over cubes and offsets.
  std::unordered_set<uint64_t> expected;
  for (const Voxel& cube : p.cubes)
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz)
          expected.insert(voxel_key(
              {cube[0] * 2 + dx, cube[1] * 2 + dy, cube[2] * 2 + dz}));
  std::unordered_set<uint64_t> actual;
  for (const Voxel& v : seen) actual.insert(voxel_key(v));
  CHECK(actual == expected);
}

TEST_CASE("full-space partition enumerates the whole grid in Morton order") {
  VoxelCloud vox;
  vox.resolution_bits = 3;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int z = 0; z < 8; ++z) vox.voxels.push_back({x, y, z});
  Partition p = build_partition(vox, 1);
  CHECK(p.cubes.size() == 8);
  uint64_t count = 0;
  uint64_t previous = 0;
  for (Voxel v : CandidateRange(p)) {
    const uint64_t code = morton_encode(v);
    if (count > 0) CHECK(code > previous);
    previous = code;
    ++count;
  }
  CHECK(count == 512);
}

TEST_CASE("nearest returns the indexed point itself at distance zero") {
  VoxelCloud vox = nirpcc::testing::random_voxel_cloud(100, 8, 29);
  NeighborIndex index(vox.voxels);
  for (size_t i = 0; i < vox.voxels.size(); i += 7) {
    auto hit = index.nearest(vox.voxels[i]);
    CHECK(hit.dist2 == 0);
    CHECK(hit.point == vox.voxels[i]);
  }
}

TEST_CASE("nearest picks the closer of two points") {
  NeighborIndex index(std::vector<Voxel>{{0, 0, 0}, {10, 0, 0}});
  auto hit = index.nearest({4, 0, 0});
  CHECK(hit.point == Voxel{0, 0, 0});
  CHECK(hit.dist2 == 16);
}

TEST_CASE("nearest matches exhaustive scan with Morton tie-breaking") {
  Prng rng(31);
  VoxelCloud vox = nirpcc::testing::random_voxel_cloud(1000, 6, 37);
  NeighborIndex index(vox.voxels);
  for (int q = 0; q < 100; ++q) {
    Voxel query{int32_t(rng.next_below(64)), int32_t(rng.next_below(64)),
                int32_t(rng.next_below(64))};
    int64_t best_d2 = INT64_MAX;
    uint64_t best_morton = ~0ull;
    Voxel best{};
    for (const Voxel& v : vox.voxels) {
      int64_t dx = v[0] - query[0], dy = v[1] - query[1], dz = v[2] - query[2];
      int64_t d2 = dx * dx + dy * dy + dz * dz;
      uint64_t m = morton_encode(v);
      if (d2 < best_d2 || (d2 == best_d2 && m < best_morton)) {
        best_d2 = d2;
        best_morton = m;
        best = v;
      }
    }
    auto hit = index.nearest(query);
    CHECK(hit.dist2 == best_d2);
    CHECK(hit.point == best);
  }
}

TEST_CASE("equidistant neighbors resolve to the smaller Morton code") {
  // (0,0,1) and (1,0,0) are both at distance 1 from the query; Morton of
  // (1,0,0) is 1 and Morton of (0,0,1) is 4.
  NeighborIndex index(std::vector<Voxel>{{0, 0, 1}, {1, 0, 0}});
  auto hit = index.nearest({0, 0, 0});
  CHECK(hit.dist2 == 1);
  CHECK(hit.point == Voxel{1, 0, 0});
}

TEST_CASE("indexing an empty set fails") {
  CHECK_THROWS_AS(NeighborIndex(std::vector<Voxel>{}), DataError);
}
