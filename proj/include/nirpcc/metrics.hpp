#pragma once

#include <optional>
#include <string>

#include "nirpcc/pointset.hpp"

namespace nirpcc {

/// Infinite PSNR is serialized as this cap in CSV output.
inline constexpr double kPsnrCap = 999.0;

struct LumaCoefficients {
  double r, g, b;
};
inline constexpr LumaCoefficients kBt709{0.2126, 0.7152, 0.0722};
inline constexpr LumaCoefficients kBt601{0.299, 0.587, 0.114};

/// Symmetric point-to-point geometric distortion in dB. Per direction, the
/// MSE is the mean squared distance from each point to its nearest neighbor
/// on the other side; the reported MSE is the worse direction. Peak value is
/// 3 * (2^N - 1)^2. Identical clouds give +infinity.
double d1_psnr(const VoxelCloud& reference, const VoxelCloud& test);

/// Luma attribute distortion in dB under nearest-neighbor pairing, peak
/// 255^2, worse direction of the two. Both clouds must carry colors.
double y_psnr(const VoxelCloud& reference, const VoxelCloud& test,
              const LumaCoefficients& luma = kBt709);

/// Total serialized bits divided by original point count.
double bits_per_point(uint64_t stream_bits, uint64_t original_point_count);

/// |reconstructed| / |original|.
double scaling_ratio(const VoxelCloud& reconstructed, const VoxelCloud& original);

/// One rate-distortion measurement; optional fields render as empty CSV cells.
struct RDPoint {
  std::optional<double> bpp;
  double d1_psnr = 0.0;
  std::optional<double> y_psnr;
  double scaling_ratio = 0.0;
  std::optional<double> tau;
  std::optional<double> lambda_f;
  std::optional<double> lambda_g;
};

std::string rd_csv_header();
std::string rd_csv_row(const RDPoint& point);

}  // namespace nirpcc
