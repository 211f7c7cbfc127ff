#include "nirpcc/training.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>

#include "nirpcc/metrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nirpcc {

namespace {
constexpr double kProbabilityClamp = 1e-7;

// Batches are always split into this many shards, processed in parallel and
// reduced in shard order, so results are identical for any thread count up
// to 16. Shards of a few hundred samples stay cache-resident per worker.
constexpr int kNumShards = 16;

int shard_begin(int batch_size, int shard) {
  return static_cast<int>(int64_t(batch_size) * shard / kNumShards);
}
}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw DataError("train: batch_size must be >= 2");
  if (!(beta > 0.0 && beta < 1.0)) throw DataError("train: beta must be in (0,1)");
  if (lambda_f < 0.0 || lambda_g < 0.0)
    throw DataError("train: lambda values must be >= 0");
  if (steps_geometry < 0 || steps_attribute < 0)
    throw DataError("train: step counts must be >= 0");
  if (!(lr_initial > 0.0) || !(lr_final > 0.0))
    throw DataError("train: learning rates must be positive");
}

FocalLossTerm focal_loss(double p, int occupancy, double alpha) {
  const double p_hat_raw = occupancy ? p : 1.0 - p;
  const double p_hat =
      std::clamp(p_hat_raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double a_hat = occupancy ? alpha : 1.0 - alpha;
  const double one_minus = 1.0 - p_hat;
  const double log_p = std::log(p_hat);
  const double loss = -a_hat * one_minus * one_minus * log_p;
  // d/dp_hat of -a*(1-p_hat)^2*log(p_hat), then the chain through p_hat(p).
  double d = a_hat * (one_minus * (2.0 * log_p - one_minus / p_hat));
  if (!occupancy) d = -d;
  return {loss, d};
}

AttributeLossTerm attribute_loss(const std::array<double, 3>& predicted,
                                 const std::array<double, 3>& target) {
  AttributeLossTerm term{0.0, {}};
  for (int ch = 0; ch < 3; ++ch) {
    const double diff = predicted[ch] - target[ch];
    term.loss += diff * diff;
    term.d_loss_d_c[ch] = 2.0 * diff;
  }
  return term;
}

double l1_norm(const NetworkModel& model) {
  double sum = 0.0;
  for (const DenseLayer& layer : model.layers) {
    sum += layer.weights.cwiseAbs().sum();
    sum += layer.bias.cwiseAbs().sum();
  }
  return sum;
}

double total_loss(std::span<const double> batch_losses, const NetworkModel& model,
                  double lambda, uint64_t num_points) {
  if (num_points == 0) throw DataError("total_loss: num_points must be > 0");
  double mean = 0.0;
  for (double v : batch_losses) mean += v;
  mean /= double(batch_losses.size());
  return mean + lambda / double(num_points) * l1_norm(model);
}

// ---------------------------------------------------------------------------
// Batch sampling

GeometryBatchSampler::GeometryBatchSampler(const Partition& partition,
                                           const VoxelCloud& occupied,
                                           double beta, uint64_t seed)
    : partition_(&partition), occupied_(&occupied), beta_(beta), rng_(seed) {
  if (occupied.size() == 0)
    throw DataError("sampler: occupied voxel set is empty");
  if (partition.cubes.empty()) throw DataError("sampler: partition has no cubes");
  occupied_keys_.reserve(occupied.size() * 2);
  for (const Voxel& v : occupied.voxels) occupied_keys_.insert(voxel_key(v));
}

void GeometryBatchSampler::next(int batch_size, std::vector<Voxel>& voxels,
                                std::vector<uint8_t>& labels) {
  const int64_t occupied_draws = std::llround(beta_ * batch_size);
  if (occupied_draws < 1)
    throw DataError("sampler: beta * batch_size must round to >= 1");
  voxels.resize(batch_size);
  labels.resize(batch_size);
  for (int64_t i = 0; i < occupied_draws && i < batch_size; ++i) {
    voxels[i] = occupied_->voxels[rng_.next_below(occupied_->size())];
    labels[i] = 1;
  }
  const int shift = partition_->local_bits();
  const uint64_t local_range = 1ull << shift;
  for (int64_t i = occupied_draws; i < batch_size; ++i) {
    const Voxel& cube = partition_->cubes[rng_.next_below(partition_->cubes.size())];
    Voxel v;
    for (int a = 0; a < 3; ++a)
      v[a] = (cube[a] << shift) |
             static_cast<int32_t>(rng_.next_below(local_range));
    voxels[i] = v;
    labels[i] = occupied_keys_.contains(voxel_key(v)) ? 1 : 0;
  }
}

std::vector<Color> assign_color_targets(const std::vector<Voxel>& reconstructed,
                                        const VoxelCloud& original,
                                        const NeighborIndex& original_index) {
  if (!original.has_colors())
    throw DataError("assign_color_targets: original cloud has no colors");
  std::vector<Color> targets(reconstructed.size());
  for (size_t i = 0; i < reconstructed.size(); ++i)
    targets[i] = original.colors[original_index.nearest(reconstructed[i]).index];
  return targets;
}

// ---------------------------------------------------------------------------
// Shared training loop

namespace {

struct ShardSlot {
  Eigen::MatrixXd output, dout;
  ForwardCache cache;  // cache.input doubles as the encode destination
  BackwardWorkspace scratch;
  Gradients grads;
  double loss_sum = 0.0;
  bool used = false;
};

// Adds lambda_eff * sign(param) to the gradients and returns l1_norm(model).
double add_l1_subgradient(Gradients& grads, const NetworkModel& model,
                          double lambda_eff) {
  double l1 = 0.0;
  auto apply = [&](double* g, const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      l1 += std::abs(p[i]);
      if (p[i] > 0.0)
        g[i] += lambda_eff;
      else if (p[i] < 0.0)
        g[i] -= lambda_eff;
    }
  };
  for (size_t i = 0; i < model.layers.size(); ++i) {
    apply(grads.weights[i].data(), model.layers[i].weights.data(),
          model.layers[i].weights.size());
    apply(grads.bias[i].data(), model.layers[i].bias.data(),
          model.layers[i].bias.size());
  }
  return l1;
}

struct LoopSetup {
  const NetworkConfig* net;
  const TrainConfig* config;
  int64_t steps;
  uint64_t init_seed;
  double lambda;
  uint64_t num_points;
  int resolution_bits;
};

TrainResult run_training_loop(
    const LoopSetup& setup,
    const std::function<void(std::vector<Voxel>&)>& fill_batch,
    const std::function<double(int, int, const Eigen::MatrixXd&, Eigen::MatrixXd&)>&
        shard_loss) {
  TrainResult result;
  result.model = init_model(*setup.net, setup.init_seed);
  if (setup.steps == 0) return result;

  NetworkModel& model = result.model;
  AdamState adam = AdamState::create(model, setup.steps, setup.config->lr_initial,
                                     setup.config->lr_final);
  const int batch = setup.config->batch_size;
  const double lambda_eff =
      setup.lambda > 0.0 ? setup.lambda / double(setup.num_points) : 0.0;

  std::vector<ShardSlot> slots(kNumShards);
  Gradients reduced;
  reduced.resize_like(model);
  std::vector<Voxel> batch_voxels;

  for (int64_t step = 0; step < setup.steps; ++step) {
    fill_batch(batch_voxels);

    std::exception_ptr failure = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int s = 0; s < kNumShards; ++s) {
      try {
        ShardSlot& slot = slots[s];
        const int begin = shard_begin(batch, s), end = shard_begin(batch, s + 1);
        slot.used = begin < end;
        if (!slot.used) continue;
        // Encoding straight into the cache input skips a copy in forward().
        positional_encode_batch(
            std::span<const Voxel>(batch_voxels).subspan(begin, end - begin),
            setup.resolution_bits, setup.net->num_frequencies, slot.cache.input);
        forward(model, slot.cache.input, slot.output, &slot.cache);
        slot.loss_sum = shard_loss(begin, end - begin, slot.output, slot.dout);
        backward(model, slot.cache, slot.dout, slot.grads, &slot.scratch);
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    reduced.set_zero();
    double distortion = 0.0;
    for (const ShardSlot& slot : slots) {
      if (!slot.used) continue;
      distortion += slot.loss_sum;
      reduced.accumulate(slot.grads);
    }
    distortion /= double(batch);

    double penalty = 0.0;
    const bool tracing = step % 100 == 0 || step + 1 == setup.steps;
    if (lambda_eff > 0.0)
      penalty = lambda_eff * add_l1_subgradient(reduced, model, lambda_eff);
    const double loss = distortion + penalty;
    if (!std::isfinite(loss))
      throw InternalError("training diverged at step " + std::to_string(step));
    if (tracing) result.trace.push_back({step, loss, adam.learning_rate()});

    adam_step(model, adam, reduced);
  }
  return result;
}

}  // namespace

TrainResult train_geometry(const VoxelCloud& vox, const Partition& partition,
                           const NetworkConfig& net, const TrainConfig& config) {
  config.validate();
  net.validate();
  if (net.out_channels != 1)
    throw DataError("train_geometry: occupancy network must have 1 output channel");
  if (vox.size() == 0) throw DataError("train_geometry: empty cloud");

  GeometryBatchSampler sampler(partition, vox, config.beta, split_seed(config.seed, 1));
  std::vector<uint8_t> labels;
  const double alpha = config.alpha();
  const double inv_batch = 1.0 / double(config.batch_size);

  auto fill = [&](std::vector<Voxel>& voxels) {
    sampler.next(config.batch_size, voxels, labels);
  };
  auto loss_fn = [&](int begin, int count, const Eigen::MatrixXd& out,
                     Eigen::MatrixXd& dout) {
    dout.resize(1, count);
    double sum = 0.0;
    for (int r = 0; r < count; ++r) {
      const FocalLossTerm term = focal_loss(out(0, r), labels[begin + r], alpha);
      sum += term.loss;
      dout(0, r) = term.d_loss_d_p * inv_batch;
    }
    return sum;
  };

  LoopSetup setup{&net,           &config,
                  config.steps_geometry, split_seed(config.seed, 0),
                  config.lambda_f, vox.size(),
                  vox.resolution_bits};
  return run_training_loop(setup, fill, loss_fn);
}

TrainResult train_attribute(const std::vector<Voxel>& reconstructed,
                            const VoxelCloud& original, const NetworkConfig& net,
                            const TrainConfig& config) {
  config.validate();
  net.validate();
  if (net.out_channels != 3)
    throw DataError("train_attribute: attribute network must have 3 output channels");
  if (reconstructed.empty())
    throw DataError("train_attribute: reconstructed geometry is empty");
  if (!original.has_colors())
    throw DataError("train_attribute: original cloud has no colors");

  NeighborIndex original_index(original.voxels);
  const std::vector<Color> targets =
      assign_color_targets(reconstructed, original, original_index);
  std::vector<std::array<double, 3>> unit_targets(targets.size());
  for (size_t i = 0; i < targets.size(); ++i)
    for (int ch = 0; ch < 3; ++ch)
      unit_targets[i][ch] = double(targets[i][ch]) / 255.0;

  Prng rng(split_seed(config.seed, 3));
  std::vector<uint32_t> batch_indices;
  const double inv_batch = 1.0 / double(config.batch_size);

  auto fill = [&](std::vector<Voxel>& voxels) {
    voxels.resize(config.batch_size);
    batch_indices.resize(config.batch_size);
    for (int i = 0; i < config.batch_size; ++i) {
      const uint32_t idx =
          static_cast<uint32_t>(rng.next_below(reconstructed.size()));
      batch_indices[i] = idx;
      voxels[i] = reconstructed[idx];
    }
  };
  auto loss_fn = [&](int begin, int count, const Eigen::MatrixXd& out,
                     Eigen::MatrixXd& dout) {
    dout.resize(3, count);
    double sum = 0.0;
    for (int r = 0; r < count; ++r) {
      const auto& target = unit_targets[batch_indices[begin + r]];
      const AttributeLossTerm term =
          attribute_loss({out(0, r), out(1, r), out(2, r)}, target);
      sum += term.loss;
      for (int ch = 0; ch < 3; ++ch) dout(ch, r) = term.d_loss_d_c[ch] * inv_batch;
    }
    return sum;
  };

  LoopSetup setup{&net,           &config,
                  config.steps_attribute, split_seed(config.seed, 2),
                  config.lambda_g, original.size(),
                  original.resolution_bits};
  return run_training_loop(setup, fill, loss_fn);
}

// ---------------------------------------------------------------------------
// Inference over the candidate set

namespace {

// Streams candidate voxels through the model in enumeration order and hands
// (chunk, probabilities) to the consumer, chunk by chunk.
template <class Consumer>
void stream_probabilities(const NetworkModel& model, const Partition& partition,
                          Consumer&& consume) {
  constexpr int kShardRows = 2048;
  CandidateRange range(partition);
  auto it = range.begin();
  const auto end = range.end();

  std::vector<Voxel> chunk;
  chunk.reserve(size_t(kNumShards) * kShardRows);
  std::vector<ShardSlot> slots(kNumShards);
  Eigen::MatrixXd probabilities;

  while (it != end) {
    chunk.clear();
    while (it != end && chunk.size() < size_t(kNumShards) * kShardRows) {
      chunk.push_back(*it);
      ++it;
    }
    const int count = static_cast<int>(chunk.size());
    probabilities.resize(model.config.out_channels, count);

    std::exception_ptr failure = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int s = 0; s < kNumShards; ++s) {
      try {
        ShardSlot& slot = slots[s];
        const int begin = shard_begin(count, s), stop = shard_begin(count, s + 1);
        if (begin >= stop) continue;
        positional_encode_batch(
            std::span<const Voxel>(chunk).subspan(begin, stop - begin),
            partition.resolution_bits, model.config.num_frequencies,
            slot.cache.input);
        forward(model, slot.cache.input, slot.output, &slot.cache);
        probabilities.middleCols(begin, stop - begin) = slot.output;
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    consume(chunk, probabilities);
  }
}

}  // namespace

VoxelCloud reconstruct_geometry(const NetworkModel& model,
                                const Partition& partition, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw DataError("reconstruct_geometry: tau must be in (0,1)");
  if (model.config.out_channels != 1)
    throw DataError("reconstruct_geometry: needs the occupancy network");
  VoxelCloud out;
  out.resolution_bits = partition.resolution_bits;
  stream_probabilities(model, partition,
                       [&](const std::vector<Voxel>& chunk,
                           const Eigen::MatrixXd& probabilities) {
                         for (size_t r = 0; r < chunk.size(); ++r)
                           if (probabilities(0, Eigen::Index(r)) > tau)
                             out.voxels.push_back(chunk[r]);
                       });
  return out;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(double(k) / 20.0);
  return grid;
}

ThresholdSearch search_threshold(const NetworkModel& model,
                                 const Partition& partition,
                                 const VoxelCloud& original,
                                 std::vector<double> candidate_taus) {
  if (candidate_taus.empty())
    throw DataError("search_threshold: no candidate thresholds");
  for (double tau : candidate_taus)
    if (!(tau > 0.0 && tau < 1.0))
      throw DataError("search_threshold: thresholds must be in (0,1)");
  if (original.size() == 0) throw DataError("search_threshold: empty original");
  std::sort(candidate_taus.begin(), candidate_taus.end());

  // One inference pass; only voxels that survive the smallest tau matter.
  const double tau_min = candidate_taus.front();
  std::vector<Voxel> voxels;
  std::vector<double> probabilities;
  stream_probabilities(model, partition,
                       [&](const std::vector<Voxel>& chunk,
                           const Eigen::MatrixXd& p) {
                         for (size_t r = 0; r < chunk.size(); ++r)
                           if (p(0, Eigen::Index(r)) > tau_min) {
                             voxels.push_back(chunk[r]);
                             probabilities.push_back(p(0, Eigen::Index(r)));
                           }
                       });

  ThresholdSearch result;
  bool found = false;
  VoxelCloud recon;
  recon.resolution_bits = partition.resolution_bits;
  for (double tau : candidate_taus) {
    recon.voxels.clear();
    for (size_t i = 0; i < voxels.size(); ++i)
      if (probabilities[i] > tau) recon.voxels.push_back(voxels[i]);
    TauStats stats{tau, recon.voxels.size(),
                   -std::numeric_limits<double>::infinity(),
                   scaling_ratio(recon, original)};
    if (!recon.voxels.empty()) {
      stats.d1_psnr = d1_psnr(original, recon);
      if (!found || stats.d1_psnr > result.best.d1_psnr) {
        result.best = {tau, stats.d1_psnr, stats.scaling_ratio};
        found = true;
      }
    }
    result.table.push_back(stats);
  }
  if (!found)
    throw DataError("search_threshold: every candidate reconstruction is empty");
  return result;
}

void set_thread_cap_from_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("NIRPCC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

}  // namespace nirpcc
