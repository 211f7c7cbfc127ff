#include "nirpcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nirpcc/spatial.hpp"

namespace nirpcc {

namespace {

double directional_geometry_mse(const std::vector<Voxel>& from,
                                const NeighborIndex& to_index) {
  double sum = 0.0;
  for (const Voxel& v : from) sum += double(to_index.nearest(v).dist2);
  return sum / double(from.size());
}

double luma(const Color& c, const LumaCoefficients& k) {
  return k.r * c[0] + k.g * c[1] + k.b * c[2];
}

double directional_luma_mse(const VoxelCloud& from, const VoxelCloud& to,
                            const NeighborIndex& to_index,
                            const LumaCoefficients& coeffs) {
  double sum = 0.0;
  for (size_t i = 0; i < from.size(); ++i) {
    const auto hit = to_index.nearest(from.voxels[i]);
    const double err = luma(from.colors[i], coeffs) - luma(to.colors[hit.index], coeffs);
    sum += err * err;
  }
  return sum / double(from.size());
}

double psnr_from_mse(double peak, double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak / mse);
}

}  // namespace

double d1_psnr(const VoxelCloud& reference, const VoxelCloud& test) {
  if (reference.size() == 0 || test.size() == 0)
    throw DataError("d1_psnr: empty cloud");
  if (reference.resolution_bits != test.resolution_bits)
    throw DataError("d1_psnr: resolution mismatch");
  NeighborIndex ref_index(reference.voxels);
  NeighborIndex test_index(test.voxels);
  const double mse = std::max(directional_geometry_mse(test.voxels, ref_index),
                              directional_geometry_mse(reference.voxels, test_index));
  const double peak_coord = double((1 << reference.resolution_bits) - 1);
  return psnr_from_mse(3.0 * peak_coord * peak_coord, mse);
}

double y_psnr(const VoxelCloud& reference, const VoxelCloud& test,
              const LumaCoefficients& coeffs) {
  if (reference.size() == 0 || test.size() == 0)
    throw DataError("y_psnr: empty cloud");
  if (!reference.has_colors() || !test.has_colors())
    throw DataError("y_psnr: both clouds must carry colors");
  NeighborIndex ref_index(reference.voxels);
  NeighborIndex test_index(test.voxels);
  const double mse =
      std::max(directional_luma_mse(test, reference, ref_index, coeffs),
               directional_luma_mse(reference, test, test_index, coeffs));
  return psnr_from_mse(255.0 * 255.0, mse);
}

double bits_per_point(uint64_t stream_bits, uint64_t original_point_count) {
  if (original_point_count == 0) throw DataError("bits_per_point: zero point count");
  return double(stream_bits) / double(original_point_count);
}

double scaling_ratio(const VoxelCloud& reconstructed, const VoxelCloud& original) {
  if (original.size() == 0) throw DataError("scaling_ratio: empty original");
  return double(reconstructed.size()) / double(original.size());
}

std::string rd_csv_header() {
  return "bpp,d1_psnr,y_psnr,scaling_ratio,tau,lambda_f,lambda_g";
}

std::string rd_csv_row(const RDPoint& p) {
  std::string row;
  int field = 0;
  auto append = [&](const std::optional<double>& v, const char* fmt,
                    bool cap_psnr = false) {
    if (field++ > 0) row.push_back(',');
    if (!v) return;
    double value = *v;
    if (cap_psnr && std::isinf(value)) value = kPsnrCap;
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, value);
    row += buf;
  };
  append(p.bpp, "%.6f");
  append(p.d1_psnr, "%.4f", /*cap_psnr=*/true);
  append(p.y_psnr, "%.4f", /*cap_psnr=*/true);
  append(p.scaling_ratio, "%.6f");
  append(p.tau, "%.6f");
  append(p.lambda_f, "%g");
  append(p.lambda_g, "%g");
  return row;
}

}  // namespace nirpcc
