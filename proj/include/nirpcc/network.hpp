#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nirpcc/common.hpp"

namespace nirpcc {

/// Upper bound on the positional-encoding frequency count.
inline constexpr int kMaxFrequencies = 40;

/// Architecture of one coordinate network. The occupancy network maps a
/// coordinate to one probability, the attribute network to three color
/// channels; both share this residual-MLP shape.
struct NetworkConfig {
  int in_channels = 3;
  int out_channels = 1;
  int num_frequencies = 12;  // L; 0 disables the sinusoidal encoding
  int num_resblocks = 2;
  int block_outer_width = 512;
  int block_inner_width = 128;

  int encoded_width() const { return in_channels * (2 * num_frequencies + 1); }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// One fully-connected layer; weights are out x in, so y = x * W^T + b.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

/// Trainable parameters. Layer order is fixed: input dense, then
/// (outer->inner, inner->outer) per residual block, then output dense.
/// Layer normalization carries no parameters; its statistics are computed
/// on every forward pass.
struct NetworkModel {
  NetworkConfig config;
  std::vector<DenseLayer> layers;

  size_t layer_count() const { return layers.size(); }
};

/// Total number of scalars (weights + biases) for a config.
int64_t param_count(const NetworkConfig& config);

/// Glorot-uniform weights, zero biases; bit-reproducible for a given seed.
NetworkModel init_model(const NetworkConfig& config, uint64_t seed);

/// Sinusoidal coordinate encoding. The coordinate is first mapped to
/// [-1, 1] using the full grid extent (2^N - 1), then laid out as
/// [x | sin terms | cos terms], frequency-major within each group:
///   x0 x1 x2 | sin(2^0 pi x).. sin(2^(L-1) pi x) | cos(2^0 pi x)..
/// Output length is 3 * (2L + 1).
void positional_encode(const Voxel& v, int resolution_bits, int num_frequencies,
                       double* out);

/// Encodes a span of voxels into the columns of a matrix (resized as
/// needed): one sample per column, matching the network's batch layout.
void positional_encode_batch(std::span<const Voxel> voxels, int resolution_bits,
                             int num_frequencies, Eigen::MatrixXd& out);

/// Everything backward() needs from the matching forward() call. Reusing one
/// cache across calls avoids reallocating the large intermediates.
struct ForwardCache {
  Eigen::MatrixXd input;  // encoded batch, encoded_width x B
  struct BlockCache {
    Eigen::MatrixXd normed;     // layer-norm output fed to the inner dense
    Eigen::VectorXd inv_sigma;  // per-row 1/sqrt(var + eps)
    Eigen::MatrixXd inner;      // post-ReLU inner activation
    Eigen::MatrixXd outer;      // post-ReLU outer activation (pre-skip)
  };
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd trunk;  // running residual stream (forward scratch)
  Eigen::MatrixXd final_normed;
  Eigen::VectorXd final_inv_sigma;
  Eigen::MatrixXd output;  // post-sigmoid probabilities
};

/// Runs the network on an encoded batch (one sample per column). Pipeline:
/// input dense, then per block [layer-norm, dense, ReLU, dense, ReLU, skip
/// add], then layer-norm, output dense, sigmoid. The output has one column
/// per sample and out_channels rows, each strictly inside (0, 1). Pass a
/// cache to enable backward().
void forward(const NetworkModel& model, const Eigen::MatrixXd& encoded,
             Eigen::MatrixXd& output, ForwardCache* cache = nullptr);

/// Parameter gradients, same shapes as NetworkModel::layers.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  void resize_like(const NetworkModel& model);
  void set_zero();
  void accumulate(const Gradients& other);
};

/// Scratch matrices for backward(); reusable across calls.
struct BackwardWorkspace {
  Eigen::MatrixXd dz, dtrunk, douter, dinner, dnormed;
};

/// Backpropagates d(loss)/d(output) — gradients w.r.t. the post-sigmoid
/// outputs — through the cached forward pass.
void backward(const NetworkModel& model, const ForwardCache& cache,
              const Eigen::MatrixXd& output_grad, Gradients& grads,
              BackwardWorkspace* workspace = nullptr);

/// Adam with bias correction and a per-step exponential learning-rate decay
/// from lr_initial at step 0 to lr_final at step total_steps.
struct AdamState {
  int64_t step = 0;
  int64_t total_steps = 1;
  double lr_initial = 1e-3;
  double lr_final = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_bias, v_bias;

  static AdamState create(const NetworkModel& model, int64_t total_steps,
                          double lr_initial = 1e-3, double lr_final = 1e-6);
  /// Learning rate that the next adam_step() call will use.
  double learning_rate() const;
};

void adam_step(NetworkModel& model, AdamState& opt, const Gradients& grads);

/// Numerically safe sigmoid; strictly inside (0, 1) for all finite inputs.
inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-std::min(z, 500.0)));
  const double e = std::exp(std::max(z, -500.0));
  return e / (1.0 + e);
}

}  // namespace nirpcc
