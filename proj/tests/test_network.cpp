#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nirpcc/network.hpp"
#include "nirpcc/training.hpp"
#include "test_util.hpp"

using namespace nirpcc;

namespace {

// Collects all parameters into one flat vector (row-major weights, then bias,
// layer by layer) so finite differences can walk them uniformly.
std::vector<double*> parameter_pointers(NetworkModel& model) {
  std::vector<double*> params;
  for (DenseLayer& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        params.push_back(&layer.weights(r, c));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      params.push_back(&layer.bias(i));
  }
  return params;
}

std::vector<double> flatten_gradients(const Gradients& grads) {
  std::vector<double> flat;
  for (size_t l = 0; l < grads.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < grads.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < grads.weights[l].cols(); ++c)
        flat.push_back(grads.weights[l](r, c));
    for (Eigen::Index i = 0; i < grads.bias[l].size(); ++i)
      flat.push_back(grads.bias[l](i));
  }
  return flat;
}

// Scalar training loss of the network on a fixed batch; used as the oracle
// function for central finite differences. Also reports a hash of the ReLU
// activation pattern: a central difference that straddles a kink does not
// estimate a derivative, so such parameters must be excluded.
enum class LossKind { Focal, Mse };

double batch_loss(const NetworkModel& model, const Eigen::MatrixXd& encoded,
                  const std::vector<uint8_t>& labels,
                  const std::vector<std::array<double, 3>>& targets,
                  LossKind kind, double alpha, uint64_t* pattern = nullptr) {
  Eigen::MatrixXd out;
  ForwardCache cache;
  forward(model, encoded, out, &cache);
  if (pattern) {
    uint64_t hash = 1469598103934665603ull;  // FNV-1a over activation signs
    for (const auto& block : cache.blocks)
      for (const Eigen::MatrixXd* act : {&block.inner, &block.outer})
        for (Eigen::Index i = 0; i < act->size(); ++i) {
          hash ^= uint64_t((*act)(i) > 0.0);
          hash *= 1099511628211ull;
        }
    *pattern = hash;
  }
  double sum = 0.0;
  if (kind == LossKind::Focal) {
    for (Eigen::Index r = 0; r < out.cols(); ++r)
      sum += focal_loss(out(0, r), labels[size_t(r)], alpha).loss;
  } else {
    for (Eigen::Index r = 0; r < out.cols(); ++r)
      sum += attribute_loss({out(0, r), out(1, r), out(2, r)}, targets[size_t(r)]).loss;
  }
  return sum / double(out.cols());
}

struct GradCheck {
  double max_rel_error;
  size_t checked;
  size_t skipped_kinks;
};

GradCheck gradient_check(NetworkModel& model, const Eigen::MatrixXd& encoded,
                         LossKind kind, double alpha, Prng& rng) {
  const size_t batch = static_cast<size_t>(encoded.cols());
  std::vector<uint8_t> labels(batch);
  std::vector<std::array<double, 3>> targets(batch);
  for (auto& l : labels) l = uint8_t(rng.next_below(2));
  for (auto& t : targets)
    t = {rng.next_unit(), rng.next_unit(), rng.next_unit()};

  // Analytic gradients.
  Eigen::MatrixXd out;
  ForwardCache cache;
  forward(model, encoded, out, &cache);
  Eigen::MatrixXd dout(out.rows(), out.cols());
  const double inv_batch = 1.0 / double(batch);
  if (kind == LossKind::Focal) {
    for (Eigen::Index r = 0; r < out.cols(); ++r)
      dout(0, r) = focal_loss(out(0, r), labels[size_t(r)], alpha).d_loss_d_p * inv_batch;
  } else {
    for (Eigen::Index r = 0; r < out.cols(); ++r) {
      auto term = attribute_loss({out(0, r), out(1, r), out(2, r)}, targets[size_t(r)]);
      for (int ch = 0; ch < 3; ++ch) dout(ch, r) = term.d_loss_d_c[ch] * inv_batch;
    }
  }
  Gradients grads;
  backward(model, cache, dout, grads);
  const std::vector<double> analytic = flatten_gradients(grads);

  // Central finite differences over every parameter.
  const double h = 1e-4;
  std::vector<double*> params = parameter_pointers(model);
  REQUIRE(params.size() == analytic.size());
  std::vector<double> numeric(params.size());
  std::vector<bool> valid(params.size());
  size_t skipped = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    uint64_t pattern_up = 0, pattern_down = 0;
    *params[i] = saved + h;
    const double up = batch_loss(model, encoded, labels, targets, kind, alpha,
                                 &pattern_up);
    *params[i] = saved - h;
    const double down = batch_loss(model, encoded, labels, targets, kind, alpha,
                                   &pattern_down);
    *params[i] = saved;
    numeric[i] = (up - down) / (2.0 * h);
    valid[i] = pattern_up == pattern_down;
    skipped += !valid[i];
  }

  double scale = 1e-12;
  for (size_t i = 0; i < params.size(); ++i)
    if (valid[i])
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  double max_rel = 0.0;
  size_t checked = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    if (!valid[i]) continue;
    ++checked;
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return {max_rel, checked, skipped};
}

Eigen::MatrixXd random_encoded_batch(const NetworkConfig& config, int batch,
                                     int n_bits, Prng& rng) {
  std::vector<Voxel> voxels(static_cast<size_t>(batch));
  const uint64_t range = 1ull << n_bits;
  for (auto& v : voxels)
    v = {int32_t(rng.next_below(range)), int32_t(rng.next_below(range)),
         int32_t(rng.next_below(range))};
  Eigen::MatrixXd encoded;
  positional_encode_batch(voxels, n_bits, config.num_frequencies, encoded);
  return encoded;
}

}  // namespace

TEST_CASE("positional encoding layout and lengths") {
  // L=0: just the normalized coordinate.
  double out[3];
  positional_encode({0, 31, 63}, 6, 0, out);
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(2.0 * 31 / 63 - 1.0));
  CHECK(out[2] == doctest::Approx(1.0));

  // Grid maximum maps to x~ = 1; layout groups are [x | sin | cos].
  double mid[9];
  positional_encode({1, 1, 1}, 1, 1, mid);
  CHECK(mid[0] == 1.0);
  CHECK(mid[3] == doctest::Approx(0.0).epsilon(1e-12));  // sin(pi)
  CHECK(mid[6] == doctest::Approx(-1.0));                // cos(pi)

  // Length 3*(2L+1).
  std::vector<double> buf(3 * (2 * 12 + 1));
  positional_encode({5, 6, 7}, 10, 12, buf.data());
  CHECK(buf.size() == 75);

  // Doubled frequencies follow the recurrence exactly.
  std::vector<double> enc(3 * (2 * 4 + 1));
  positional_encode({123, 45, 210}, 8, 4, enc.data());
  for (int f = 0; f < 4; ++f)
    for (int a = 0; a < 3; ++a) {
      const double angle = std::pow(2.0, f) * 3.14159265358979323846 * enc[a];
      CHECK(enc[3 + 3 * f + a] == doctest::Approx(std::sin(angle)).epsilon(1e-9));
      CHECK(enc[3 + 12 + 3 * f + a] == doctest::Approx(std::cos(angle)).epsilon(1e-9));
    }
}

TEST_CASE("batch encoder matches the scalar path") {
  std::vector<Voxel> voxels{{0, 0, 0}, {9, 4, 63}, {31, 63, 7}};
  Eigen::MatrixXd batch;
  positional_encode_batch(voxels, 6, 3, batch);
  REQUIRE(batch.rows() == 3 * (2 * 3 + 1));
  REQUIRE(batch.cols() == 3);
  double scalar[3 * 7];
  for (size_t i = 0; i < voxels.size(); ++i) {
    positional_encode(voxels[i], 6, 3, scalar);
    for (int j = 0; j < batch.rows(); ++j)
      CHECK(batch(j, Eigen::Index(i)) == scalar[j]);
  }
}

TEST_CASE("forward outputs stay strictly inside (0,1)") {
  NetworkConfig config{3, 1, 2, 1, 16, 8};
  NetworkModel model = init_model(config, 99);
  Prng rng(5);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 64, 8, rng);
  Eigen::MatrixXd out;
  forward(model, encoded, out, nullptr);
  CHECK(out.cols() == 64);
  CHECK(out.minCoeff() > 0.0);
  CHECK(out.maxCoeff() < 1.0);
}

TEST_CASE("zero weights and biases produce exactly 0.5") {
  NetworkConfig config{3, 2, 1, 2, 8, 4};
  NetworkModel model = init_model(config, 1);
  for (auto& layer : model.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  Prng rng(6);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 8, 6, rng);
  Eigen::MatrixXd out;
  forward(model, encoded, out, nullptr);
  CHECK((out.array() == 0.5).all());
}

TEST_CASE("full-scale occupancy config maps 4096 voxels to 4096x1") {
  NetworkConfig config{3, 1, 12, 2, 512, 128};
  NetworkModel model = init_model(config, 3);
  Prng rng(7);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 4096, 10, rng);
  Eigen::MatrixXd out;
  forward(model, encoded, out, nullptr);
  CHECK(out.cols() == 4096);
  CHECK(out.rows() == 1);
}

TEST_CASE("residual blocks with zeroed inner layers act as identity") {
  NetworkConfig config{3, 1, 1, 2, 12, 6};
  NetworkModel with_blocks = init_model(config, 42);
  for (int b = 0; b < config.num_resblocks; ++b) {
    with_blocks.layers[1 + 2 * b].weights.setZero();
    with_blocks.layers[1 + 2 * b].bias.setZero();
    with_blocks.layers[2 + 2 * b].weights.setZero();
    with_blocks.layers[2 + 2 * b].bias.setZero();
  }
  // Same input/output layers, no blocks: the pipelines agree when the blocks
  // contribute nothing beyond the skip path.
  NetworkConfig slim = config;
  slim.num_resblocks = 1;
  NetworkModel without = init_model(slim, 0);
  without.layers[0] = with_blocks.layers[0];
  without.layers[1].weights.setZero();
  without.layers[1].bias.setZero();
  without.layers[2].weights.setZero();
  without.layers[2].bias.setZero();
  without.layers[3] = with_blocks.layers.back();

  Prng rng(8);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 32, 6, rng);
  Eigen::MatrixXd a, b;
  forward(with_blocks, encoded, a, nullptr);
  forward(without, encoded, b, nullptr);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is bit-deterministic") {
  NetworkConfig config{3, 1, 4, 2, 24, 12};
  NetworkModel model = init_model(config, 77);
  Prng rng(9);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 128, 8, rng);
  Eigen::MatrixXd a, b;
  forward(model, encoded, a, nullptr);
  forward(model, encoded, b, nullptr);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("analytic gradients match central finite differences") {
  Prng rng(1234);
  double worst = 0.0;
  size_t checked = 0, skipped = 0;
  for (int trial = 0; trial < 6; ++trial) {
    NetworkConfig config{3, 1, 1, 1 + int(rng.next_below(2)), 8, 4};
    NetworkModel model = init_model(config, 1000 + trial);
    Eigen::MatrixXd encoded = random_encoded_batch(config, 8, 6, rng);
    auto check = gradient_check(model, encoded, LossKind::Focal, 0.6, rng);
    worst = std::max(worst, check.max_rel_error);
    checked += check.checked;
    skipped += check.skipped_kinks;
  }
  for (int trial = 0; trial < 6; ++trial) {
    NetworkConfig config{3, 3, 1, 1, 8, 4};
    NetworkModel model = init_model(config, 2000 + trial);
    Eigen::MatrixXd encoded = random_encoded_batch(config, 8, 6, rng);
    auto check = gradient_check(model, encoded, LossKind::Mse, 0.5, rng);
    worst = std::max(worst, check.max_rel_error);
    checked += check.checked;
    skipped += check.skipped_kinks;
  }
  CHECK(worst < 1e-4);
  // Kink exclusions must stay rare (a few percent) or the check loses its
  // teeth; with h=1e-4 and O(100) ReLU units per evaluation a crossing shows
  // up roughly once per 40 parameters.
  CHECK(checked >= 19 * skipped);
}

TEST_CASE("output bias gradient with zero weights is sigmoid'(0) per sample") {
  NetworkConfig config{3, 1, 0, 1, 4, 2};
  NetworkModel model = init_model(config, 0);
  for (auto& layer : model.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  const int batch = 8;
  Eigen::MatrixXd encoded = Eigen::MatrixXd::Zero(config.encoded_width(), batch);
  Eigen::MatrixXd out;
  ForwardCache cache;
  forward(model, encoded, out, &cache);
  // d(sum of outputs)/d(bias) = batch * sigmoid'(0) = batch * 0.25.
  Eigen::MatrixXd dout = Eigen::MatrixXd::Ones(1, batch);
  Gradients grads;
  backward(model, cache, dout, grads);
  CHECK(grads.bias.back()(0) == doctest::Approx(0.25 * batch));
}

TEST_CASE("loss independent of a parameter gives zero gradient") {
  // With inner weights zero, ReLU outputs are zero, so the outer weight
  // matrix of the block receives zero gradient.
  NetworkConfig config{3, 1, 0, 1, 4, 2};
  NetworkModel model = init_model(config, 5);
  model.layers[1].weights.setZero();
  model.layers[1].bias.setZero();
  Prng rng(10);
  Eigen::MatrixXd encoded = random_encoded_batch(config, 4, 4, rng);
  Eigen::MatrixXd out;
  ForwardCache cache;
  forward(model, encoded, out, &cache);
  Eigen::MatrixXd dout = Eigen::MatrixXd::Ones(1, 4);
  Gradients grads;
  backward(model, cache, dout, grads);
  CHECK(grads.weights[2].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam leaves parameters alone on zero gradients") {
  NetworkConfig config{3, 1, 1, 1, 6, 3};
  NetworkModel model = init_model(config, 11);
  NetworkModel before = model;
  AdamState opt = AdamState::create(model, 100);
  Gradients grads;
  grads.resize_like(model);
  grads.set_zero();
  adam_step(model, opt, grads);
  CHECK(opt.step == 1);
  for (size_t l = 0; l < model.layers.size(); ++l)
    CHECK((model.layers[l].weights.array() == before.layers[l].weights.array()).all());
}

TEST_CASE("learning rate decays exponentially between the endpoints") {
  NetworkConfig config{3, 1, 0, 1, 4, 2};
  NetworkModel model = init_model(config, 0);
  AdamState opt = AdamState::create(model, 1000);
  CHECK(opt.learning_rate() == doctest::Approx(1e-3).epsilon(1e-12));
  opt.step = 1000;
  CHECK(opt.learning_rate() == doctest::Approx(1e-6).epsilon(1e-12));
  opt.step = 500;
  CHECK(opt.learning_rate() == doctest::Approx(std::sqrt(1e-3 * 1e-6)).epsilon(1e-9));
}

TEST_CASE("three adam steps on a scalar match the hand-rolled recurrence") {
  // Single 1x1 layer stand-in: drive one parameter with constant gradient 1.
  NetworkConfig config{3, 1, 0, 1, 1, 1};
  NetworkModel model = init_model(config, 0);
  // Zero everything but track one scalar: the output bias.
  for (auto& layer : model.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  AdamState opt = AdamState::create(model, 3, 1e-3, 1e-3);  // constant lr
  Gradients grads;
  grads.resize_like(model);
  grads.set_zero();
  grads.bias.back()(0) = 1.0;

  double theta = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    adam_step(model, opt, grads);
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double m_hat = m / (1.0 - std::pow(0.9, t));
    const double v_hat = v / (1.0 - std::pow(0.999, t));
    theta -= 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(model.layers.back().bias(0) == doctest::Approx(theta).epsilon(1e-15));
  }
}

TEST_CASE("init_model is deterministic with zero biases and bounded weights") {
  NetworkConfig config{3, 1, 2, 2, 16, 8};
  NetworkModel a = init_model(config, 123);
  NetworkModel b = init_model(config, 123);
  NetworkModel c = init_model(config, 124);
  bool identical = true, differs = false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    identical &= (a.layers[l].weights.array() == b.layers[l].weights.array()).all();
    differs |= (a.layers[l].weights.array() != c.layers[l].weights.array()).any();
    CHECK((a.layers[l].bias.array() == 0.0).all());
    const double limit = std::sqrt(
        6.0 / double(a.layers[l].weights.rows() + a.layers[l].weights.cols()));
    CHECK(a.layers[l].weights.cwiseAbs().maxCoeff() <= limit);
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("param_count matches hand enumeration and the built model") {
  // 1 block, widths 4/2, in 3, out 1, L=0:
  // 3->4: 12+4, 4->2: 8+2, 2->4: 8+4, 4->1: 4+1 = 43.
  NetworkConfig small{3, 1, 0, 1, 4, 2};
  CHECK(param_count(small) == 43);

  // Doubling out_channels only grows the output layer.
  NetworkConfig doubled = small;
  doubled.out_channels = 2;
  CHECK(param_count(doubled) - param_count(small) == 4 + 1);

  // Full-scale attribute config, frozen after first enumeration.
  NetworkConfig attribute{3, 3, 12, 3, 512, 128};
  CHECK(param_count(attribute) == 435587);

  // Enumeration oracle: count scalars in an actual model.
  for (const NetworkConfig& config : {small, attribute}) {
    NetworkModel model = init_model(config, 0);
    int64_t total = 0;
    for (const auto& layer : model.layers)
      total += layer.weights.size() + layer.bias.size();
    CHECK(total == param_count(config));
  }
}
