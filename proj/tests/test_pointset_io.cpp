#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "nirpcc/ply_io.hpp"
#include "test_util.hpp"

using namespace nirpcc;
using nirpcc::testing::temp_path;

namespace {
void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}
}  // namespace

TEST_CASE("ascii ply with colors parses") {
  const std::string path = temp_path("colored.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 3\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n"
             "0 0 0 255 0 0\n1 2 3 0 255 0\n4.5 5.5 6.5 0 0 255\n");
  PointCloud cloud = read_ply(path);
  REQUIRE(cloud.points.size() == 3);
  REQUIRE(cloud.has_colors());
  CHECK(cloud.points[1] == std::array<double, 3>{1, 2, 3});
  CHECK(cloud.points[2][0] == doctest::Approx(4.5));
  CHECK(cloud.colors[0] == Color{255, 0, 0});
  CHECK(cloud.colors[2] == Color{0, 0, 255});
}

TEST_CASE("xyz-only ply has no colors") {
  const std::string path = temp_path("plain.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 2\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n1 1 1\n");
  PointCloud cloud = read_ply(path);
  CHECK(cloud.points.size() == 2);
  CHECK(!cloud.has_colors());
}

TEST_CASE("declared count larger than payload is a truncation error") {
  const std::string path = temp_path("truncated.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 10\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n"
             "0 0 0\n1 1 1\n2 2 2\n3 3 3\n4 4 4\n5 5 5\n6 6 6\n7 7 7\n8 8 8\n");
  try {
    read_ply(path);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyErrorKind::TruncatedPayload);
  }
}

TEST_CASE("malformed header and unsupported properties are distinct errors") {
  const std::string bad_header = temp_path("bad_header.ply");
  write_text(bad_header, "not_a_ply\n");
  try {
    read_ply(bad_header);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyErrorKind::MalformedHeader);
  }

  const std::string float_color = temp_path("float_color.ply");
  write_text(float_color,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property float red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n0 0 0 1.0 2 3\n");
  try {
    read_ply(float_color);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyErrorKind::UnsupportedProperty);
    CHECK(std::string(e.what()).find("red") != std::string::npos);
  }

  const std::string listed = temp_path("list_vertex.ply");
  write_text(listed,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property list uchar int vertex_indices\nend_header\n0 0 0 0\n");
  CHECK_THROWS_AS(read_ply(listed), PlyError);
}

TEST_CASE("binary truncation is detected") {
  const std::string path = temp_path("bin_truncated.ply");
  std::string header =
      "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  header.append(12, '\0');  // one point instead of two
  write_text(path, header);
  try {
    read_ply(path);
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyErrorKind::TruncatedPayload);
  }
}

TEST_CASE("unreadable path raises io error") {
  try {
    read_ply(temp_path("does_not_exist.ply"));
    FAIL("expected PlyError");
  } catch (const PlyError& e) {
    CHECK(e.kind() == PlyErrorKind::IoFailure);
  }
  PointCloud cloud;
  cloud.points.push_back({0, 0, 0});
  CHECK_THROWS_AS(write_ply(cloud, "/nonexistent_dir_xyz/file.ply"), PlyError);
}

TEST_CASE("binary and ascii round trips preserve everything") {
  Prng rng(7);
  PointCloud cloud;
  for (int i = 0; i < 100; ++i) {
    cloud.points.push_back({rng.next_real(-50, 900), rng.next_real(-3, 3),
                            rng.next_real(0, 1023)});
    cloud.colors.push_back({uint8_t(rng.next_below(256)),
                            uint8_t(rng.next_below(256)),
                            uint8_t(rng.next_below(256))});
  }
  for (PlyFormat format : {PlyFormat::BinaryLittleEndian, PlyFormat::Ascii}) {
    const std::string path = temp_path("roundtrip.ply");
    write_ply(cloud, path, format);
    PointCloud back = read_ply(path);
    REQUIRE(back.points.size() == cloud.points.size());
    REQUIRE(back.colors == cloud.colors);
    for (size_t i = 0; i < cloud.points.size(); ++i)
      for (int a = 0; a < 3; ++a)
        CHECK(back.points[i][a] == double(float(cloud.points[i][a])));
  }
}

TEST_CASE("writer omits color properties when absent") {
  PointCloud cloud;
  cloud.points.push_back({1, 2, 3});
  const std::string path = temp_path("no_colors.ply");
  write_ply(cloud, path, PlyFormat::Ascii);
  std::ifstream in(path);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  CHECK(contents.find("red") == std::string::npos);
  CHECK(!read_ply(path).has_colors());
}

// --- voxelize / devoxelize ---

TEST_CASE("endpoints map to grid corners at N=1") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 1, 1}};
  VoxelCloud vox = voxelize(cloud, 1);
  REQUIRE(vox.voxels.size() == 2);
  CHECK(vox.voxels[0] == Voxel{0, 0, 0});
  CHECK(vox.voxels[1] == Voxel{1, 1, 1});
}

TEST_CASE("coincident points merge with mean color rounded half up") {
  PointCloud cloud;
  cloud.points = {{5, 5, 5}, {5, 5, 5}};
  cloud.colors = {{0, 0, 0}, {255, 255, 255}};
  VoxelCloud vox = voxelize(cloud, 4);
  REQUIRE(vox.voxels.size() == 1);
  CHECK(vox.colors[0] == Color{128, 128, 128});
}

TEST_CASE("integral in-range clouds pass through and voxelize is idempotent") {
  VoxelCloud original = nirpcc::testing::random_voxel_cloud(500, 8, 11, true);
  PointCloud as_points = devoxelize(original);
  VoxelCloud again = voxelize(as_points, 8);
  CHECK(again.voxels == original.voxels);
  CHECK(again.colors == original.colors);
}

TEST_CASE("voxelize keeps coordinates in range without duplicates") {
  Prng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_bits = 1 + int(rng.next_below(8));
    PointCloud cloud;
    const size_t count = 1 + rng.next_below(400);
    for (size_t i = 0; i < count; ++i)
      cloud.points.push_back({rng.next_real(-100, 100), rng.next_real(-1, 1),
                              rng.next_real(0, 5000)});
    VoxelCloud vox = voxelize(cloud, n_bits);
    std::unordered_set<uint64_t> seen;
    for (const Voxel& v : vox.voxels) {
      for (int a = 0; a < 3; ++a) {
        CHECK(v[a] >= 0);
        CHECK(v[a] <= vox.max_coordinate());
      }
      CHECK(seen.insert(voxel_key(v)).second);
    }
    VoxelCloud again = voxelize(devoxelize(vox), n_bits);
    CHECK(again.voxels == vox.voxels);
  }
}

TEST_CASE("single voxel devoxelizes verbatim") {
  VoxelCloud vox;
  vox.resolution_bits = 4;
  vox.voxels = {{5, 5, 5}};
  PointCloud cloud = devoxelize(vox);
  REQUIRE(cloud.points.size() == 1);
  CHECK(cloud.points[0] == std::array<double, 3>{5.0, 5.0, 5.0});
}

TEST_CASE("devoxelize preserves count and order") {
  VoxelCloud vox = nirpcc::testing::random_voxel_cloud(1000, 10, 3);
  PointCloud cloud = devoxelize(vox);
  REQUIRE(cloud.points.size() == 1000);
  for (size_t i = 0; i < 1000; ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(cloud.points[i][a] == double(vox.voxels[i][a]));
}

TEST_CASE("empty cloud cannot be voxelized") {
  CHECK_THROWS_AS(voxelize(PointCloud{}, 8), DataError);
}
