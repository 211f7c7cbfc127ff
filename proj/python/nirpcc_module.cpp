// Python bindings for the nirpcc codec: PLY I/O, voxelization, encode,
// decode and the distortion metrics, with numpy arrays at the boundary.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <optional>

#include "nirpcc/codec.hpp"
#include "nirpcc/ply_io.hpp"

namespace py = pybind11;
using namespace nirpcc;

namespace {

PointCloud cloud_from_arrays(const py::array_t<double>& points,
                             const std::optional<py::array_t<uint8_t>>& colors) {
  const auto p = points.unchecked<2>();
  if (p.shape(1) != 3) throw DataError("points must have shape (n, 3)");
  PointCloud cloud;
  cloud.points.resize(size_t(p.shape(0)));
  for (py::ssize_t i = 0; i < p.shape(0); ++i)
    cloud.points[size_t(i)] = {p(i, 0), p(i, 1), p(i, 2)};
  if (colors) {
    const auto c = colors->unchecked<2>();
    if (c.shape(0) != p.shape(0) || c.shape(1) != 3)
      throw DataError("colors must have shape (n, 3) matching points");
    cloud.colors.resize(size_t(c.shape(0)));
    for (py::ssize_t i = 0; i < c.shape(0); ++i)
      cloud.colors[size_t(i)] = {c(i, 0), c(i, 1), c(i, 2)};
  }
  return cloud;
}

py::tuple cloud_to_arrays(const PointCloud& cloud) {
  py::array_t<double> points({py::ssize_t(cloud.points.size()), py::ssize_t(3)});
  auto p = points.mutable_unchecked<2>();
  for (size_t i = 0; i < cloud.points.size(); ++i)
    for (int a = 0; a < 3; ++a) p(py::ssize_t(i), a) = cloud.points[i][a];
  if (!cloud.has_colors()) return py::make_tuple(points, py::none());
  py::array_t<uint8_t> colors({py::ssize_t(cloud.colors.size()), py::ssize_t(3)});
  auto c = colors.mutable_unchecked<2>();
  for (size_t i = 0; i < cloud.colors.size(); ++i)
    for (int a = 0; a < 3; ++a) c(py::ssize_t(i), a) = cloud.colors[i][a];
  return py::make_tuple(points, colors);
}

VoxelCloud voxels_from_arrays(const py::array_t<int32_t>& voxels, int resolution_bits,
                              const std::optional<py::array_t<uint8_t>>& colors) {
  const auto v = voxels.unchecked<2>();
  if (v.shape(1) != 3) throw DataError("voxels must have shape (n, 3)");
  VoxelCloud cloud;
  cloud.resolution_bits = resolution_bits;
  cloud.voxels.resize(size_t(v.shape(0)));
  for (py::ssize_t i = 0; i < v.shape(0); ++i)
    cloud.voxels[size_t(i)] = {v(i, 0), v(i, 1), v(i, 2)};
  if (colors) {
    const auto c = colors->unchecked<2>();
    if (c.shape(0) != v.shape(0) || c.shape(1) != 3)
      throw DataError("colors must have shape (n, 3) matching voxels");
    cloud.colors.resize(size_t(c.shape(0)));
    for (py::ssize_t i = 0; i < c.shape(0); ++i)
      cloud.colors[size_t(i)] = {c(i, 0), c(i, 1), c(i, 2)};
  }
  return cloud;
}

struct EncodeKwargs {
  std::string profile = "paper";
  std::optional<int> resolution_bits, cube_bits, batch_size;
  std::optional<int64_t> steps_f, steps_g;
  std::optional<double> lambda_f, lambda_g, beta;
  std::optional<uint64_t> seed;
  bool geometry_only = false;
  std::optional<std::vector<double>> tau_grid;
  std::optional<NetworkConfig> geometry_net, attribute_net;
  std::optional<int> f_step_exponent, g_step_exponent;

  EncodeOptions to_options() const {
    EncodeOptions o;
    if (profile == "toy")
      o = toy_profile();
    else if (profile == "paper")
      o = paper_profile();
    else
      throw DataError("unknown profile '" + profile + "'");
    if (resolution_bits) o.resolution_bits = *resolution_bits;
    if (cube_bits) o.cube_bits = *cube_bits;
    if (batch_size) o.train.batch_size = *batch_size;
    if (steps_f) o.train.steps_geometry = *steps_f;
    if (steps_g) o.train.steps_attribute = *steps_g;
    if (lambda_f) o.train.lambda_f = *lambda_f;
    if (lambda_g) o.train.lambda_g = *lambda_g;
    if (beta) o.train.beta = *beta;
    if (seed) o.train.seed = *seed;
    if (tau_grid) o.tau_grid = *tau_grid;
    if (geometry_net) o.geometry_net = *geometry_net;
    if (attribute_net) o.attribute_net = *attribute_net;
    if (f_step_exponent) o.geometry_step_exponent = *f_step_exponent;
    if (g_step_exponent) o.attribute_step_exponent = *g_step_exponent;
    o.geometry_only = geometry_only;
    return o;
  }
};

py::dict stats_dict(const EncodeStats& s) {
  py::dict d;
  d["input_points"] = s.input_points;
  d["stream_bytes"] = s.stream_bytes;
  d["bpp"] = s.bpp;
  d["tau"] = s.tau;
  d["tau_d1_psnr"] = s.tau_d1_psnr;
  d["scaling_ratio"] = s.scaling_ratio;
  d["reconstructed_points"] = s.reconstructed_points;
  d["geometry_seconds"] = s.geometry_seconds;
  d["attribute_seconds"] = s.attribute_seconds;
  return d;
}

std::vector<uint8_t> bytes_to_vector(const py::bytes& data) {
  const std::string_view view = data;
  return std::vector<uint8_t>(view.begin(), view.end());
}

}  // namespace

PYBIND11_MODULE(_nirpcc, m) {
  m.doc() = "Point cloud codec built on per-cloud coordinate networks";
  m.attr("__version__") = "0.1.0";
  set_thread_cap_from_env();

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<InternalError>(m, "InternalError", PyExc_RuntimeError);

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init([](int out_channels, int num_frequencies, int num_resblocks,
                       int outer_width, int inner_width) {
             return NetworkConfig{3,           out_channels, num_frequencies,
                                  num_resblocks, outer_width, inner_width};
           }),
           py::arg("out_channels"), py::arg("num_frequencies"),
           py::arg("num_resblocks"), py::arg("outer_width"), py::arg("inner_width"))
      .def_readonly("num_frequencies", &NetworkConfig::num_frequencies)
      .def_readonly("num_resblocks", &NetworkConfig::num_resblocks)
      .def("param_count", [](const NetworkConfig& c) { return param_count(c); });

  m.def(
      "read_ply",
      [](const std::string& path) { return cloud_to_arrays(read_ply(path)); },
      py::arg("path"), "Read a PLY file; returns (points, colors-or-None).");

  m.def(
      "write_ply",
      [](const std::string& path, const py::array_t<double>& points,
         const std::optional<py::array_t<uint8_t>>& colors, bool ascii) {
        write_ply(cloud_from_arrays(points, colors), path,
                  ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
      },
      py::arg("path"), py::arg("points"), py::arg("colors") = py::none(),
      py::arg("ascii") = false);

  m.def(
      "voxelize",
      [](const py::array_t<double>& points,
         const std::optional<py::array_t<uint8_t>>& colors, int resolution_bits) {
        const VoxelCloud vox =
            voxelize(cloud_from_arrays(points, colors), resolution_bits);
        py::array_t<int32_t> out({py::ssize_t(vox.size()), py::ssize_t(3)});
        auto v = out.mutable_unchecked<2>();
        for (size_t i = 0; i < vox.size(); ++i)
          for (int a = 0; a < 3; ++a) v(py::ssize_t(i), a) = vox.voxels[i][a];
        if (!vox.has_colors()) return py::make_tuple(out, py::none());
        py::array_t<uint8_t> c({py::ssize_t(vox.size()), py::ssize_t(3)});
        auto cm = c.mutable_unchecked<2>();
        for (size_t i = 0; i < vox.size(); ++i)
          for (int a = 0; a < 3; ++a) cm(py::ssize_t(i), a) = vox.colors[i][a];
        return py::make_tuple(out, c);
      },
      py::arg("points"), py::arg("colors") = py::none(),
      py::arg("resolution_bits") = 10,
      "Quantize points onto the N-bit grid; returns (voxels, colors-or-None).");

  m.def(
      "encode",
      [](const py::array_t<double>& points,
         const std::optional<py::array_t<uint8_t>>& colors, const std::string& profile,
         std::optional<int> resolution_bits, std::optional<int> cube_bits,
         std::optional<double> lambda_f, std::optional<double> lambda_g,
         std::optional<int64_t> steps_f, std::optional<int64_t> steps_g,
         std::optional<double> beta, std::optional<int> batch_size,
         std::optional<uint64_t> seed, bool geometry_only,
         std::optional<std::vector<double>> tau_grid,
         std::optional<NetworkConfig> geometry_net,
         std::optional<NetworkConfig> attribute_net) {
        EncodeKwargs kw{profile,  resolution_bits, cube_bits, batch_size,
                        steps_f,  steps_g,         lambda_f,  lambda_g,
                        beta,     seed,            geometry_only, tau_grid,
                        geometry_net, attribute_net, {}, {}};
        const PointCloud cloud = cloud_from_arrays(points, colors);
        EncodeResult result;
        {
          py::gil_scoped_release release;
          result = encode_cloud(cloud, kw.to_options());
        }
        return py::make_tuple(
            py::bytes(reinterpret_cast<const char*>(result.stream.data()),
                      result.stream.size()),
            stats_dict(result.stats));
      },
      py::arg("points"), py::arg("colors") = py::none(),
      py::arg("profile") = "paper", py::arg("resolution_bits") = py::none(),
      py::arg("cube_bits") = py::none(), py::arg("lambda_f") = py::none(),
      py::arg("lambda_g") = py::none(), py::arg("steps_f") = py::none(),
      py::arg("steps_g") = py::none(), py::arg("beta") = py::none(),
      py::arg("batch_size") = py::none(), py::arg("seed") = py::none(),
      py::arg("geometry_only") = false, py::arg("tau_grid") = py::none(),
      py::arg("geometry_net") = py::none(), py::arg("attribute_net") = py::none(),
      "Compress a cloud; returns (stream bytes, stats dict).");

  m.def(
      "decode",
      [](const py::bytes& data) {
        const std::vector<uint8_t> stream = bytes_to_vector(data);
        PointCloud cloud;
        {
          py::gil_scoped_release release;
          cloud = decode_cloud(stream);
        }
        return cloud_to_arrays(cloud);
      },
      py::arg("stream"), "Decompress a stream; returns (points, colors-or-None).");

  m.def(
      "d1_psnr",
      [](const py::array_t<int32_t>& reference, const py::array_t<int32_t>& test,
         int resolution_bits) {
        return d1_psnr(voxels_from_arrays(reference, resolution_bits, std::nullopt),
                       voxels_from_arrays(test, resolution_bits, std::nullopt));
      },
      py::arg("reference"), py::arg("test"), py::arg("resolution_bits"));

  m.def(
      "y_psnr",
      [](const py::array_t<int32_t>& reference,
         const py::array_t<uint8_t>& reference_colors,
         const py::array_t<int32_t>& test, const py::array_t<uint8_t>& test_colors,
         int resolution_bits) {
        return y_psnr(
            voxels_from_arrays(reference, resolution_bits, reference_colors),
            voxels_from_arrays(test, resolution_bits, test_colors));
      },
      py::arg("reference"), py::arg("reference_colors"), py::arg("test"),
      py::arg("test_colors"), py::arg("resolution_bits"));

  m.def(
      "evaluate",
      [](const std::string& reference_ply, const std::string& test_ply,
         int resolution_bits) {
        const VoxelCloud reference =
            voxelize(read_ply(reference_ply), resolution_bits);
        const VoxelCloud test = voxelize(read_ply(test_ply), resolution_bits);
        py::dict d;
        d["d1_psnr"] = d1_psnr(reference, test);
        if (reference.has_colors() && test.has_colors())
          d["y_psnr"] = y_psnr(reference, test);
        else
          d["y_psnr"] = py::none();
        d["scaling_ratio"] = scaling_ratio(test, reference);
        return d;
      },
      py::arg("reference_ply"), py::arg("test_ply"), py::arg("resolution_bits") = 10,
      "Distortion metrics between two PLY files.");

  m.def(
      "encode_file",
      [](const std::string& input_ply, const std::string& output_nirp,
         const std::string& profile, std::optional<int> resolution_bits,
         std::optional<double> lambda_f, std::optional<double> lambda_g,
         std::optional<int64_t> steps_f, std::optional<int64_t> steps_g,
         std::optional<uint64_t> seed, bool geometry_only) {
        EncodeKwargs kw;
        kw.profile = profile;
        kw.resolution_bits = resolution_bits;
        kw.lambda_f = lambda_f;
        kw.lambda_g = lambda_g;
        kw.steps_f = steps_f;
        kw.steps_g = steps_g;
        kw.seed = seed;
        kw.geometry_only = geometry_only;
        const PointCloud cloud = read_ply(input_ply);
        EncodeResult result;
        {
          py::gil_scoped_release release;
          result = encode_cloud(cloud, kw.to_options());
        }
        std::ofstream out(output_nirp, std::ios::binary);
        if (!out) throw DataError("cannot open '" + output_nirp + "'");
        out.write(reinterpret_cast<const char*>(result.stream.data()),
                  std::streamsize(result.stream.size()));
        return stats_dict(result.stats);
      },
      py::arg("input_ply"), py::arg("output_nirp"), py::arg("profile") = "paper",
      py::arg("resolution_bits") = py::none(), py::arg("lambda_f") = py::none(),
      py::arg("lambda_g") = py::none(), py::arg("steps_f") = py::none(),
      py::arg("steps_g") = py::none(), py::arg("seed") = py::none(),
      py::arg("geometry_only") = false);

  m.def(
      "decode_file",
      [](const std::string& input_nirp, const std::string& output_ply, bool ascii) {
        std::ifstream in(input_nirp, std::ios::binary);
        if (!in) throw DataError("cannot open '" + input_nirp + "'");
        std::vector<uint8_t> stream((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
        PointCloud cloud;
        {
          py::gil_scoped_release release;
          cloud = decode_cloud(stream);
        }
        write_ply(cloud, output_ply,
                  ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
        return cloud.points.size();
      },
      py::arg("input_nirp"), py::arg("output_ply"), py::arg("ascii") = false);
}
