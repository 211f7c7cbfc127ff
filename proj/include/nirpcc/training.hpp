#pragma once

#include <functional>
#include <span>
#include <unordered_set>
#include <vector>

#include "nirpcc/network.hpp"
#include "nirpcc/spatial.hpp"

namespace nirpcc {

/// Hyperparameters shared by both training loops. The occupied-batch
/// fraction beta fixes the focal-loss class weight: alpha = 1 - beta.
struct TrainConfig {
  int batch_size = 4096;
  int64_t steps_geometry = 1'200'000;
  int64_t steps_attribute = 200'000;
  double beta = 0.5;  // fraction of each geometry batch drawn from occupied voxels
  double lambda_f = 0.0;
  double lambda_g = 0.0;
  uint64_t seed = 0;
  double lr_initial = 1e-3;
  double lr_final = 1e-6;

  double alpha() const { return 1.0 - beta; }
  void validate() const;
};

/// Loss value and its derivative with respect to the prediction.
struct FocalLossTerm {
  double loss;
  double d_loss_d_p;
};

/// Alpha-balanced focal loss with focusing exponent 2:
/// -a * (1 - p_hat)^2 * log(p_hat), with p_hat = p for occupied voxels and
/// 1 - p otherwise, a = alpha for occupied and 1 - alpha otherwise.
/// p_hat is clamped to [1e-7, 1 - 1e-7] before the log.
FocalLossTerm focal_loss(double p, int occupancy, double alpha);

struct AttributeLossTerm {
  double loss;
  std::array<double, 3> d_loss_d_c;
};

/// Squared Euclidean distance between predicted and target colors in [0,1]^3.
AttributeLossTerm attribute_loss(const std::array<double, 3>& predicted,
                                 const std::array<double, 3>& target);

/// Sum of |w| over every weight and bias.
double l1_norm(const NetworkModel& model);

/// Mean batch distortion plus (lambda / num_points) * l1_norm(model).
double total_loss(std::span<const double> batch_losses, const NetworkModel& model,
                  double lambda, uint64_t num_points);

/// Draws geometry training batches: round(beta * B) voxels uniformly (with
/// replacement) from the occupied set labeled 1, the rest uniformly from the
/// candidate set as (random cube, random local offset), labeled by membership.
class GeometryBatchSampler {
 public:
  GeometryBatchSampler(const Partition& partition, const VoxelCloud& occupied,
                       double beta, uint64_t seed);

  void next(int batch_size, std::vector<Voxel>& voxels,
            std::vector<uint8_t>& labels);

 private:
  const Partition* partition_;
  const VoxelCloud* occupied_;
  std::unordered_set<uint64_t> occupied_keys_;
  double beta_;
  Prng rng_;
};

/// Nearest-neighbor color target for each reconstructed voxel; ties resolve
/// to the original point with the smallest Morton code.
std::vector<Color> assign_color_targets(const std::vector<Voxel>& reconstructed,
                                        const VoxelCloud& original,
                                        const NeighborIndex& original_index);

struct TraceRow {
  int64_t step;
  double loss;
  double learning_rate;
};

struct TrainResult {
  NetworkModel model;
  std::vector<TraceRow> trace;  // sampled every 100 steps plus the last step
};

/// Fits the occupancy network on a voxelized cloud. Deterministic given
/// (config.seed, config, cloud); throws InternalError if the loss diverges.
TrainResult train_geometry(const VoxelCloud& vox, const Partition& partition,
                           const NetworkConfig& net, const TrainConfig& config);

/// Fits the attribute network on the reconstructed geometry, with targets
/// assigned from the original cloud's nearest neighbors. Batches are drawn
/// uniformly with replacement from the reconstructed voxels.
TrainResult train_attribute(const std::vector<Voxel>& reconstructed,
                            const VoxelCloud& original, const NetworkConfig& net,
                            const TrainConfig& config);

/// Keeps every candidate voxel with occupancy probability strictly above tau.
VoxelCloud reconstruct_geometry(const NetworkModel& model,
                                const Partition& partition, double tau);

struct ThresholdResult {
  double tau;
  double d1_psnr;
  double scaling_ratio;
};

struct TauStats {
  double tau;
  uint64_t reconstructed_count;
  double d1_psnr;  // -inf when the reconstruction is empty
  double scaling_ratio;
};

struct ThresholdSearch {
  ThresholdResult best;
  std::vector<TauStats> table;  // one row per candidate tau, ascending
};

/// Evaluates D1 PSNR over a tau grid and picks the argmax (ties -> smaller
/// tau). Throws DataError if every candidate reconstruction is empty.
ThresholdSearch search_threshold(const NetworkModel& model,
                                 const Partition& partition,
                                 const VoxelCloud& original,
                                 std::vector<double> candidate_taus);

/// tau in {0.05, 0.10, ..., 0.95}.
std::vector<double> default_tau_grid();

/// Caps the worker count used for batch-parallel training and inference.
/// Reads NIRPCC_THREADS; values <= 0 fall back to the hardware default.
/// Results do not depend on the thread count.
void set_thread_cap_from_env();

}  // namespace nirpcc
