#include "nirpcc/network.hpp"

#include <cmath>

namespace nirpcc {

namespace {
constexpr double kLayerNormEpsilon = 1e-5;
constexpr double kPi = 3.14159265358979323846;

// Four-lane partial sums so the reductions vectorize; the summation order
// is fixed here and is part of the normative forward arithmetic.
// Mean and variance in one read, shifted by the first element to keep the
// cancellation benign (the shift sits at the data's own scale).
inline void lane_mean_var(const double* v, Eigen::Index n, double* mean,
                          double* var) {
  const double shift = v[0];
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  double q0 = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
  Eigen::Index i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = v[i] - shift, d1 = v[i + 1] - shift;
    const double d2 = v[i + 2] - shift, d3 = v[i + 3] - shift;
    s0 += d0;
    s1 += d1;
    s2 += d2;
    s3 += d3;
    q0 += d0 * d0;
    q1 += d1 * d1;
    q2 += d2 * d2;
    q3 += d3 * d3;
  }
  for (; i < n; ++i) {
    const double d = v[i] - shift;
    s0 += d;
    q0 += d * d;
  }
  const double mean_d = ((s0 + s1) + (s2 + s3)) / double(n);
  double variance = ((q0 + q1) + (q2 + q3)) / double(n) - mean_d * mean_d;
  if (variance < 0.0) variance = 0.0;
  *mean = shift + mean_d;
  *var = variance;
}

// Samples live in columns, so per-sample statistics run over contiguous
// memory. Layer norm carries no learned parameters.
void layer_norm(const Eigen::MatrixXd& x, Eigen::MatrixXd& normed,
                Eigen::VectorXd& inv_sigma) {
  const Eigen::Index width = x.rows(), samples = x.cols();
  normed.resize(width, samples);
  inv_sigma.resize(samples);
  for (Eigen::Index j = 0; j < samples; ++j) {
    const double* in = x.col(j).data();
    double* out = normed.col(j).data();
    double mean, var;
    lane_mean_var(in, width, &mean, &var);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_sigma(j) = inv;
    for (Eigen::Index i = 0; i < width; ++i) out[i] = (in[i] - mean) * inv;
  }
}

// In place: g <- inv_sigma * (g - mean(g) - normed * mean(g .* normed)).
void layer_norm_backward(Eigen::MatrixXd& g, const Eigen::MatrixXd& normed,
                         const Eigen::VectorXd& inv_sigma) {
  const Eigen::Index width = g.rows(), samples = g.cols();
  for (Eigen::Index j = 0; j < samples; ++j) {
    double* grad = g.col(j).data();
    const double* y = normed.col(j).data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    double q0 = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
    Eigen::Index i = 0;
    for (; i + 4 <= width; i += 4) {
      s0 += grad[i];
      s1 += grad[i + 1];
      s2 += grad[i + 2];
      s3 += grad[i + 3];
      q0 += grad[i] * y[i];
      q1 += grad[i + 1] * y[i + 1];
      q2 += grad[i + 2] * y[i + 2];
      q3 += grad[i + 3] * y[i + 3];
    }
    for (; i < width; ++i) {
      s0 += grad[i];
      q0 += grad[i] * y[i];
    }
    const double g_mean = ((s0 + s1) + (s2 + s3)) / double(width);
    const double gy_mean = ((q0 + q1) + (q2 + q3)) / double(width);
    const double inv = inv_sigma(j);
    for (Eigen::Index i = 0; i < width; ++i)
      grad[i] = (grad[i] - g_mean - y[i] * gy_mean) * inv;
  }
}

// dst = where(act > 0, src, 0); all three share one layout.
void relu_mask(const Eigen::MatrixXd& act, const Eigen::MatrixXd& src,
               Eigen::MatrixXd& dst) {
  dst.resize(src.rows(), src.cols());
  const double* a = act.data();
  const double* s = src.data();
  double* d = dst.data();
  const Eigen::Index n = src.size();
  for (Eigen::Index i = 0; i < n; ++i) d[i] = a[i] > 0.0 ? s[i] : 0.0;
}

void dense(const DenseLayer& layer, const Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
  y.noalias() = layer.weights * x;
  y.colwise() += layer.bias;
}

// Dense layer with the bias add and ReLU folded into one output sweep.
void dense_relu(const DenseLayer& layer, const Eigen::MatrixXd& x,
                Eigen::MatrixXd& y) {
  y.noalias() = layer.weights * x;
  const Eigen::Index width = y.rows(), samples = y.cols();
  const double* bias = layer.bias.data();
  for (Eigen::Index j = 0; j < samples; ++j) {
    double* col = y.col(j).data();
    for (Eigen::Index i = 0; i < width; ++i) {
      const double v = col[i] + bias[i];
      col[i] = v > 0.0 ? v : 0.0;
    }
  }
}
}  // namespace

void NetworkConfig::validate() const {
  if (in_channels != 3) throw DataError("network: in_channels must be 3");
  if (out_channels < 1) throw DataError("network: out_channels must be >= 1");
  if (num_frequencies < 0 || num_frequencies > kMaxFrequencies)
    throw DataError("network: num_frequencies must be in 0..40");
  if (num_resblocks < 1) throw DataError("network: num_resblocks must be >= 1");
  if (block_outer_width < 1 || block_inner_width < 1)
    throw DataError("network: block widths must be positive");
}

int64_t param_count(const NetworkConfig& c) {
  const int64_t enc = c.encoded_width();
  const int64_t outer = c.block_outer_width, inner = c.block_inner_width;
  int64_t count = enc * outer + outer;                       // input dense
  count += c.num_resblocks * (outer * inner + inner +        // outer -> inner
                              inner * outer + outer);        // inner -> outer
  count += outer * c.out_channels + c.out_channels;          // output dense
  return count;
}

NetworkModel init_model(const NetworkConfig& config, uint64_t seed) {
  config.validate();
  NetworkModel model;
  model.config = config;
  Prng rng(seed);
  auto make_layer = [&](int out, int in) {
    DenseLayer layer;
    layer.weights.resize(out, in);
    layer.bias = Eigen::VectorXd::Zero(out);
    const double limit = std::sqrt(6.0 / double(in + out));
    // Row-major fill order so the layout matches the serialized one.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c)
        layer.weights(r, c) = rng.next_real(-limit, limit);
    return layer;
  };
  model.layers.push_back(make_layer(config.block_outer_width, config.encoded_width()));
  for (int b = 0; b < config.num_resblocks; ++b) {
    model.layers.push_back(make_layer(config.block_inner_width, config.block_outer_width));
    model.layers.push_back(make_layer(config.block_outer_width, config.block_inner_width));
  }
  model.layers.push_back(make_layer(config.out_channels, config.block_outer_width));
  return model;
}

void positional_encode(const Voxel& v, int resolution_bits, int num_frequencies,
                       double* out) {
  const double half = (double((1 << resolution_bits) - 1)) / 2.0;
  double x[3], s[3], c[3];
  for (int a = 0; a < 3; ++a) {
    x[a] = double(v[a]) / half - 1.0;  // [-1, 1] over the full grid extent
    out[a] = x[a];
  }
  if (num_frequencies == 0) return;
  for (int a = 0; a < 3; ++a) {
    s[a] = std::sin(kPi * x[a]);
    c[a] = std::cos(kPi * x[a]);
  }
  double* sin_out = out + 3;
  double* cos_out = out + 3 + 3 * num_frequencies;
  for (int f = 0; f < num_frequencies; ++f) {
    for (int a = 0; a < 3; ++a) {
      sin_out[3 * f + a] = s[a];
      cos_out[3 * f + a] = c[a];
    }
    if (f + 1 == num_frequencies) break;
    // Angle-doubling recurrence: exact IEEE ops, no repeated libm calls.
    for (int a = 0; a < 3; ++a) {
      const double s2 = 2.0 * s[a] * c[a];
      const double c2 = c[a] * c[a] - s[a] * s[a];
      s[a] = s2;
      c[a] = c2;
    }
  }
}

void positional_encode_batch(std::span<const Voxel> voxels, int resolution_bits,
                             int num_frequencies, Eigen::MatrixXd& out) {
  const int width = 3 * (2 * num_frequencies + 1);
  out.resize(width, static_cast<Eigen::Index>(voxels.size()));
  for (size_t i = 0; i < voxels.size(); ++i)
    positional_encode(voxels[i], resolution_bits, num_frequencies,
                      out.col(static_cast<Eigen::Index>(i)).data());
}

void forward(const NetworkModel& model, const Eigen::MatrixXd& encoded,
             Eigen::MatrixXd& output, ForwardCache* cache) {
  const NetworkConfig& cfg = model.config;
  if (encoded.rows() != cfg.encoded_width())
    throw InternalError("forward: batch width does not match encoded input width");
  if (model.layers.size() != size_t(2 + 2 * cfg.num_resblocks))
    throw InternalError("forward: layer list does not match config");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.blocks.resize(cfg.num_resblocks);
  if (&encoded != &c.input) c.input = encoded;

  Eigen::MatrixXd& trunk = c.trunk;
  dense(model.layers[0], encoded, trunk);
  for (int b = 0; b < cfg.num_resblocks; ++b) {
    auto& bc = c.blocks[b];
    layer_norm(trunk, bc.normed, bc.inv_sigma);
    dense_relu(model.layers[1 + 2 * b], bc.normed, bc.inner);
    dense_relu(model.layers[2 + 2 * b], bc.inner, bc.outer);
    trunk += bc.outer;  // skip connection
  }
  layer_norm(trunk, c.final_normed, c.final_inv_sigma);
  dense(model.layers.back(), c.final_normed, output);
  output = output.unaryExpr([](double z) { return stable_sigmoid(z); });
  c.output = output;
}

void Gradients::resize_like(const NetworkModel& model) {
  weights.resize(model.layers.size());
  bias.resize(model.layers.size());
  for (size_t i = 0; i < model.layers.size(); ++i) {
    weights[i].resize(model.layers[i].weights.rows(), model.layers[i].weights.cols());
    bias[i].resize(model.layers[i].bias.size());
  }
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : bias) b.setZero();
}

void Gradients::accumulate(const Gradients& other) {
  for (size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    bias[i] += other.bias[i];
  }
}

void backward(const NetworkModel& model, const ForwardCache& cache,
              const Eigen::MatrixXd& output_grad, Gradients& grads,
              BackwardWorkspace* workspace) {
  const NetworkConfig& cfg = model.config;
  if (cache.output.rows() != output_grad.rows() ||
      cache.output.cols() != output_grad.cols() ||
      cache.blocks.size() != size_t(cfg.num_resblocks))
    throw InternalError("backward: cache does not match model or gradient shape");
  if (grads.weights.size() != model.layers.size()) grads.resize_like(model);

  BackwardWorkspace local;
  BackwardWorkspace& ws = workspace ? *workspace : local;

  // Through the sigmoid: dL/dz = dL/dp * p * (1 - p).
  Eigen::MatrixXd& dz = ws.dz;
  dz = output_grad.array() * cache.output.array() * (1.0 - cache.output.array());

  const size_t out_layer = model.layers.size() - 1;
  grads.weights[out_layer].noalias() = dz * cache.final_normed.transpose();
  grads.bias[out_layer] = dz.rowwise().sum();

  Eigen::MatrixXd& dtrunk = ws.dtrunk;
  dtrunk.noalias() = model.layers[out_layer].weights.transpose() * dz;
  layer_norm_backward(dtrunk, cache.final_normed, cache.final_inv_sigma);

  Eigen::MatrixXd& douter = ws.douter;
  Eigen::MatrixXd& dinner = ws.dinner;
  Eigen::MatrixXd& dnormed = ws.dnormed;
  for (int b = cfg.num_resblocks - 1; b >= 0; --b) {
    const auto& bc = cache.blocks[b];
    const DenseLayer& mid = model.layers[1 + 2 * b];
    const DenseLayer& back = model.layers[2 + 2 * b];

    relu_mask(bc.outer, dtrunk, douter);
    grads.weights[2 + 2 * b].noalias() = douter * bc.inner.transpose();
    grads.bias[2 + 2 * b] = douter.rowwise().sum();

    dinner.noalias() = back.weights.transpose() * douter;
    relu_mask(bc.inner, dinner, dinner);
    grads.weights[1 + 2 * b].noalias() = dinner * bc.normed.transpose();
    grads.bias[1 + 2 * b] = dinner.rowwise().sum();

    dnormed.noalias() = mid.weights.transpose() * dinner;
    layer_norm_backward(dnormed, bc.normed, bc.inv_sigma);
    dtrunk += dnormed;  // skip path keeps dtrunk, layer-norm path adds in
  }

  grads.weights[0].noalias() = dtrunk * cache.input.transpose();
  grads.bias[0] = dtrunk.rowwise().sum();
}

AdamState AdamState::create(const NetworkModel& model, int64_t total_steps,
                            double lr_initial, double lr_final) {
  AdamState s;
  s.total_steps = std::max<int64_t>(total_steps, 1);
  s.lr_initial = lr_initial;
  s.lr_final = lr_final;
  s.m_weights.resize(model.layers.size());
  s.v_weights.resize(model.layers.size());
  s.m_bias.resize(model.layers.size());
  s.v_bias.resize(model.layers.size());
  for (size_t i = 0; i < model.layers.size(); ++i) {
    s.m_weights[i] = Eigen::MatrixXd::Zero(model.layers[i].weights.rows(),
                                           model.layers[i].weights.cols());
    s.v_weights[i] = s.m_weights[i];
    s.m_bias[i] = Eigen::VectorXd::Zero(model.layers[i].bias.size());
    s.v_bias[i] = s.m_bias[i];
  }
  return s;
}

double AdamState::learning_rate() const {
  const double t = double(step) / double(total_steps);
  return lr_initial * std::pow(lr_final / lr_initial, t);
}

void adam_step(NetworkModel& model, AdamState& opt, const Gradients& grads) {
  if (grads.weights.size() != model.layers.size())
    throw InternalError("adam_step: gradient layout does not match model");
  const double lr = opt.learning_rate();
  const int64_t t = opt.step + 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, double(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(t));

  auto update = [&](double* param, double* m, double* v, const double* g,
                    Eigen::Index n) {
    using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
    using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;
    ArrayMap pm(param, n), mm(m, n), vm(v, n);
    ConstArrayMap gm(g, n);
    mm = opt.beta1 * mm + (1.0 - opt.beta1) * gm;
    vm = opt.beta2 * vm + (1.0 - opt.beta2) * gm.square();
    pm -= (lr / bc1) * mm / ((vm / bc2).sqrt() + opt.epsilon);
  };
  for (size_t i = 0; i < model.layers.size(); ++i) {
    update(model.layers[i].weights.data(), opt.m_weights[i].data(),
           opt.v_weights[i].data(), grads.weights[i].data(),
           model.layers[i].weights.size());
    update(model.layers[i].bias.data(), opt.m_bias[i].data(), opt.v_bias[i].data(),
           grads.bias[i].data(), model.layers[i].bias.size());
  }
  ++opt.step;
}

}  // namespace nirpcc
