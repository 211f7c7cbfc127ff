// nirpcc: compress, decompress and evaluate voxelized point clouds with
// per-cloud coordinate networks.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "nirpcc/codec.hpp"
#include "nirpcc/ply_io.hpp"

namespace {

using namespace nirpcc;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("read failure on '" + path + "'");
  return data;
}

void write_file(const std::string& path, std::span<const uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failure on '" + path + "'");
}

std::vector<double> parse_tau_grid(const std::string& spec) {
  std::vector<double> grid;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    grid.push_back(std::stod(item));
  }
  if (grid.empty()) throw CLI::ValidationError("--tau-grid", "no values given");
  return grid;
}

std::pair<double, double> parse_lambda_pair(const std::string& spec) {
  const size_t colon = spec.find(':');
  if (colon == std::string::npos) {
    const double v = std::stod(spec);
    return {v, v};
  }
  return {std::stod(spec.substr(0, colon)), std::stod(spec.substr(colon + 1))};
}

// Shared flag set for commands that run the encoder.
struct EncodeArgs {
  std::string input, output;
  std::string profile = "paper";
  int resolution_bits = 0, cube_bits = 0, batch_size = 0;
  long long steps_f = -1, steps_g = -1;
  double lambda_f = 0.0, lambda_g = 0.0, beta = 0.0;
  uint64_t seed = 0;
  bool geometry_only = false;
  std::string tau_grid;
  int f_frequencies = -1, f_resblocks = -1, f_outer = -1, f_inner = -1, f_step_exp = -1;
  int g_frequencies = -1, g_resblocks = -1, g_outer = -1, g_inner = -1, g_step_exp = -1;

  void add_options(CLI::App* cmd, bool with_lambdas) {
    cmd->add_option("-i,--input", input, "input PLY file")->required();
    cmd->add_option("--profile", profile, "configuration profile")
        ->check(CLI::IsMember({"paper", "toy"}))
        ->capture_default_str();
    cmd->add_option("-N,--resolution-bits", resolution_bits, "grid resolution N");
    cmd->add_option("-T,--cube-bits", cube_bits, "cube exponent T");
    if (with_lambdas) {
      cmd->add_option("--lambda-f", lambda_f, "geometry sparsity strength");
      cmd->add_option("--lambda-g", lambda_g, "attribute sparsity strength");
    }
    cmd->add_option("--steps-f", steps_f, "geometry training steps");
    cmd->add_option("--steps-g", steps_g, "attribute training steps");
    cmd->add_option("--beta", beta, "occupied fraction per geometry batch");
    cmd->add_option("--batch-size", batch_size, "training batch size");
    cmd->add_option("--seed", seed, "master random seed")->capture_default_str();
    cmd->add_flag("--geometry-only", geometry_only, "skip attribute coding");
    cmd->add_option("--tau-grid", tau_grid, "comma list of candidate thresholds");
    cmd->add_option("--f-frequencies", f_frequencies, "geometry net frequencies L");
    cmd->add_option("--f-resblocks", f_resblocks, "geometry net residual blocks");
    cmd->add_option("--f-outer", f_outer, "geometry net outer width");
    cmd->add_option("--f-inner", f_inner, "geometry net inner width");
    cmd->add_option("--f-step-exp", f_step_exp, "geometry quantization exponent");
    cmd->add_option("--g-frequencies", g_frequencies, "attribute net frequencies L");
    cmd->add_option("--g-resblocks", g_resblocks, "attribute net residual blocks");
    cmd->add_option("--g-outer", g_outer, "attribute net outer width");
    cmd->add_option("--g-inner", g_inner, "attribute net inner width");
    cmd->add_option("--g-step-exp", g_step_exp, "attribute quantization exponent");
  }

  EncodeOptions to_options(const CLI::App* cmd) const {
    EncodeOptions o = profile == "toy" ? toy_profile() : paper_profile();
    auto set_if = [&](const char* name, auto& field, const auto& value) {
      const CLI::Option* option =
          const_cast<CLI::App*>(cmd)->get_option_no_throw(name);
      if (option && option->count() > 0)
        field = std::remove_reference_t<decltype(field)>(value);
    };
    set_if("--resolution-bits", o.resolution_bits, resolution_bits);
    set_if("--cube-bits", o.cube_bits, cube_bits);
    set_if("--lambda-f", o.train.lambda_f, lambda_f);
    set_if("--lambda-g", o.train.lambda_g, lambda_g);
    set_if("--steps-f", o.train.steps_geometry, steps_f);
    set_if("--steps-g", o.train.steps_attribute, steps_g);
    set_if("--beta", o.train.beta, beta);
    set_if("--batch-size", o.train.batch_size, batch_size);
    set_if("--seed", o.train.seed, seed);
    o.geometry_only = geometry_only;
    if (cmd->count("--tau-grid")) o.tau_grid = parse_tau_grid(tau_grid);
    set_if("--f-frequencies", o.geometry_net.num_frequencies, f_frequencies);
    set_if("--f-resblocks", o.geometry_net.num_resblocks, f_resblocks);
    set_if("--f-outer", o.geometry_net.block_outer_width, f_outer);
    set_if("--f-inner", o.geometry_net.block_inner_width, f_inner);
    set_if("--f-step-exp", o.geometry_step_exponent, f_step_exp);
    set_if("--g-frequencies", o.attribute_net.num_frequencies, g_frequencies);
    set_if("--g-resblocks", o.attribute_net.num_resblocks, g_resblocks);
    set_if("--g-outer", o.attribute_net.block_outer_width, g_outer);
    set_if("--g-inner", o.attribute_net.block_inner_width, g_inner);
    set_if("--g-step-exp", o.attribute_step_exponent, g_step_exp);
    return o;
  }
};

void print_encode_summary(const EncodeStats& s) {
  std::printf("input points        %llu\n", (unsigned long long)s.input_points);
  std::printf("reconstructed       %llu (ratio %.4f)\n",
              (unsigned long long)s.reconstructed_points, s.scaling_ratio);
  std::printf("tau                 %.6f (D1 %.2f dB before quantization)\n", s.tau,
              s.tau_d1_psnr);
  std::printf("stream bytes        %llu\n", (unsigned long long)s.stream_bytes);
  std::printf("bpp                 %.6f\n", s.bpp);
  std::printf("train time          %.1fs geometry, %.1fs attribute\n",
              s.geometry_seconds, s.attribute_seconds);
}

int run_encode(const EncodeArgs& args, const CLI::App* cmd) {
  const EncodeOptions options = args.to_options(cmd);
  const PointCloud cloud = read_ply(args.input);
  const EncodeResult result = encode_cloud(cloud, options);
  write_file(args.output, result.stream);
  write_trace_csv(result.geometry_trace, args.output + ".f.csv");
  if (!result.attribute_trace.empty())
    write_trace_csv(result.attribute_trace, args.output + ".g.csv");
  print_encode_summary(result.stats);
  return kExitOk;
}

int run_decode(const std::string& input, const std::string& output, bool ascii) {
  const std::vector<uint8_t> stream = read_file(input);
  const PointCloud cloud = decode_cloud(stream);
  write_ply(cloud, output, ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
  std::printf("decoded %zu points%s\n", cloud.points.size(),
              cloud.has_colors() ? " with colors" : "");
  return kExitOk;
}

int run_eval(const std::string& reference_path, const std::string& test_path,
             int resolution_bits, const std::string& luma_name,
             const std::string& nirp_path) {
  const LumaCoefficients luma = luma_name == "bt601" ? kBt601 : kBt709;
  const VoxelCloud reference = voxelize(read_ply(reference_path), resolution_bits);
  const VoxelCloud test = voxelize(read_ply(test_path), resolution_bits);

  RDPoint point;
  point.d1_psnr = d1_psnr(reference, test);
  if (reference.has_colors() && test.has_colors())
    point.y_psnr = y_psnr(reference, test, luma);
  point.scaling_ratio = scaling_ratio(test, reference);
  if (!nirp_path.empty())
    point.bpp = bits_per_point(read_file(nirp_path).size() * 8, reference.size());
  std::printf("%s\n%s\n", rd_csv_header().c_str(), rd_csv_row(point).c_str());
  return kExitOk;
}

int run_sweep(const EncodeArgs& args, const CLI::App* cmd,
              const std::vector<std::string>& lambda_specs,
              const std::string& csv_path) {
  const EncodeOptions base = args.to_options(cmd);
  const PointCloud cloud = read_ply(args.input);
  const VoxelCloud original = voxelize(cloud, base.resolution_bits);

  std::vector<RDPoint> points;
  for (const std::string& spec : lambda_specs) {
    const auto [lambda_f, lambda_g] = parse_lambda_pair(spec);
    EncodeOptions options = base;
    options.train.lambda_f = lambda_f;
    options.train.lambda_g = lambda_g;
    try {
      const EncodeResult encoded = encode_cloud(cloud, options);
      const VoxelCloud decoded = decode_stream(encoded.stream);
      RDPoint point;
      point.bpp = encoded.stats.bpp;
      point.d1_psnr = d1_psnr(original, decoded);
      if (original.has_colors() && decoded.has_colors())
        point.y_psnr = y_psnr(original, decoded);
      point.scaling_ratio = scaling_ratio(decoded, original);
      point.tau = encoded.stats.tau;
      point.lambda_f = lambda_f;
      point.lambda_g = lambda_g;
      points.push_back(point);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "sweep point lambda=%s failed: %s\n", spec.c_str(),
                   e.what());
    }
  }
  std::sort(points.begin(), points.end(),
            [](const RDPoint& a, const RDPoint& b) { return *a.bpp < *b.bpp; });

  std::string csv = rd_csv_header() + "\n";
  for (const RDPoint& p : points) csv += rd_csv_row(p) + "\n";
  if (csv_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file(csv_path, std::span<const uint8_t>(
                             reinterpret_cast<const uint8_t*>(csv.data()),
                             csv.size()));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  set_thread_cap_from_env();

  CLI::App app{"nirpcc: point cloud codec built on per-cloud coordinate networks"};
  app.require_subcommand(1);

  // encode
  auto* encode = app.add_subcommand("encode", "compress a PLY file to .nirp");
  EncodeArgs encode_args;
  encode_args.add_options(encode, /*with_lambdas=*/true);
  encode->add_option("-o,--output", encode_args.output, "output .nirp file")->required();

  // decode
  auto* decode = app.add_subcommand("decode", "reconstruct a PLY from .nirp");
  std::string decode_in, decode_out;
  bool decode_ascii = false;
  decode->add_option("-i,--input", decode_in, "input .nirp file")->required();
  decode->add_option("-o,--output", decode_out, "output PLY file")->required();
  decode->add_flag("--ascii", decode_ascii, "write ASCII PLY instead of binary");

  // eval
  auto* eval = app.add_subcommand("eval", "measure distortion between two PLY files");
  std::string eval_ref, eval_test, eval_luma = "bt709", eval_nirp;
  int eval_bits = 10;
  eval->add_option("-r,--reference", eval_ref, "reference PLY")->required();
  eval->add_option("-t,--test", eval_test, "test PLY")->required();
  eval->add_option("-N,--resolution-bits", eval_bits, "grid resolution N")
      ->capture_default_str();
  eval->add_option("--luma", eval_luma, "luma matrix for Y PSNR")
      ->check(CLI::IsMember({"bt709", "bt601"}))
      ->capture_default_str();
  eval->add_option("--nirp", eval_nirp, "stream file used for the bpp column");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "rate-distortion sweep over lambda pairs");
  EncodeArgs sweep_args;
  sweep_args.add_options(sweep, /*with_lambdas=*/false);
  std::vector<std::string> sweep_lambdas;
  std::string sweep_csv;
  sweep->add_option("--lambdas", sweep_lambdas,
                    "lambda pairs, each 'f:g' (or 'v' for f=g=v)")
      ->required()
      ->delimiter(',');
  sweep->add_option("--csv", sweep_csv, "write rows to this file instead of stdout");

  try {
    app.parse(argc, argv);
    if (*encode) return run_encode(encode_args, encode);
    if (*decode) return run_decode(decode_in, decode_out, decode_ascii);
    if (*eval) return run_eval(eval_ref, eval_test, eval_bits, eval_luma, eval_nirp);
    if (*sweep) return run_sweep(sweep_args, sweep, sweep_lambdas, sweep_csv);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
}
