#include "nirpcc/codec.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nirpcc/weight_codec.hpp"

namespace nirpcc {

namespace {
double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}
}  // namespace

EncodeOptions paper_profile() { return EncodeOptions{}; }

EncodeOptions toy_profile() {
  EncodeOptions o;
  o.resolution_bits = 8;
  o.geometry_net = NetworkConfig{3, 1, 6, 1, 64, 32};
  o.attribute_net = NetworkConfig{3, 3, 6, 1, 64, 32};
  o.train.steps_geometry = 20'000;
  o.train.steps_attribute = 5'000;
  return o;
}

EncodeResult encode_cloud(const PointCloud& cloud, const EncodeOptions& options) {
  options.train.validate();
  if (options.cube_bits < 0 || options.cube_bits > options.resolution_bits)
    throw DataError("encode: cube_bits must be in 0..resolution_bits");

  const VoxelCloud vox = voxelize(cloud, options.resolution_bits);
  const Partition partition = build_partition(vox, options.cube_bits);

  EncodeResult result;
  result.stats.input_points = vox.size();

  auto start = std::chrono::steady_clock::now();
  TrainResult geometry =
      train_geometry(vox, partition, options.geometry_net, options.train);
  result.stats.geometry_seconds = seconds_since(start);
  result.geometry_trace = std::move(geometry.trace);

  const ThresholdSearch search =
      search_threshold(geometry.model, partition, vox, options.tau_grid);
  result.stats.tau_d1_psnr = search.best.d1_psnr;

  CompressedCloud container;
  container.resolution_bits = uint8_t(options.resolution_bits);
  container.cube_bits = uint8_t(options.cube_bits);
  container.tau_q = uint16_t(std::llround(search.best.tau * 65535.0));
  container.cube_bitmap = cube_bitmap_from_partition(partition);
  container.geometry =
      make_weight_header(options.geometry_net, options.geometry_step_exponent);

  // The decoder thresholds on the stored (quantized) tau; reconstruct with
  // the same value so the attribute network trains on what will be decoded.
  const double tau_hat = container.tau();
  const VoxelCloud reconstructed =
      reconstruct_geometry(geometry.model, partition, tau_hat);
  result.stats.reconstructed_points = reconstructed.size();
  result.stats.tau = tau_hat;
  result.stats.scaling_ratio = scaling_ratio(reconstructed, vox);

  const bool code_attributes = vox.has_colors() && !options.geometry_only;
  if (code_attributes) {
    if (reconstructed.size() == 0)
      throw DataError("encode: empty reconstruction, cannot train attributes");
    start = std::chrono::steady_clock::now();
    TrainResult attribute = train_attribute(reconstructed.voxels, vox,
                                            options.attribute_net, options.train);
    result.stats.attribute_seconds = seconds_since(start);
    result.attribute_trace = std::move(attribute.trace);

    container.has_attributes = true;
    container.attribute =
        make_weight_header(options.attribute_net, options.attribute_step_exponent);
    container.attribute_payload = encode_levels(
        quantize(attribute.model, options.attribute_step_exponent));
  }
  container.geometry_payload =
      encode_levels(quantize(geometry.model, options.geometry_step_exponent));

  result.stream = serialize(container);
  result.stats.stream_bytes = result.stream.size();
  result.stats.bpp = bits_per_point(result.stream.size() * 8, vox.size());
  return result;
}

VoxelCloud decode_stream(std::span<const uint8_t> stream) {
  const CompressedCloud container = parse(stream);
  const Partition partition = partition_from_bitmap(
      container.cube_bitmap, container.resolution_bits, container.cube_bits);

  const NetworkConfig geometry_config =
      network_config_from_header(container.geometry, 1);
  const NetworkModel geometry_model = dequantize(decode_levels(
      container.geometry_payload, geometry_config, container.geometry.step_exponent));

  const double tau = container.tau();
  if (!(tau > 0.0 && tau < 1.0))
    throw DataError("decode: stored tau is outside (0,1)");
  VoxelCloud cloud = reconstruct_geometry(geometry_model, partition, tau);

  if (container.has_attributes && cloud.size() > 0) {
    const NetworkConfig attribute_config =
        network_config_from_header(container.attribute, 3);
    const NetworkModel attribute_model =
        dequantize(decode_levels(container.attribute_payload, attribute_config,
                                 container.attribute.step_exponent));
    cloud.colors.resize(cloud.size());
    constexpr int kChunk = 8192;
    Eigen::MatrixXd encoded, colors;
    for (size_t begin = 0; begin < cloud.size(); begin += kChunk) {
      const size_t count = std::min<size_t>(kChunk, cloud.size() - begin);
      positional_encode_batch(
          std::span<const Voxel>(cloud.voxels).subspan(begin, count),
          cloud.resolution_bits, attribute_config.num_frequencies, encoded);
      forward(attribute_model, encoded, colors, nullptr);
      for (size_t i = 0; i < count; ++i)
        for (int ch = 0; ch < 3; ++ch)
          cloud.colors[begin + i][ch] = static_cast<uint8_t>(
              std::llround(255.0 * colors(ch, Eigen::Index(i))));
    }
  }
  return cloud;
}

PointCloud decode_cloud(std::span<const uint8_t> stream) {
  return devoxelize(decode_stream(stream));
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open trace file '" + path + "'");
  out << "step,loss,lr\n";
  char line[96];
  for (const TraceRow& row : trace) {
    std::snprintf(line, sizeof(line), "%lld,%.8g,%.8g\n",
                  static_cast<long long>(row.step), row.loss, row.learning_rate);
    out << line;
  }
}

}  // namespace nirpcc
