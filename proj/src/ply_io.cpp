#include "nirpcc/ply_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace nirpcc {

namespace {

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::I8:
    case ScalarType::U8:
      return 1;
    case ScalarType::I16:
    case ScalarType::U16:
      return 2;
    case ScalarType::I32:
    case ScalarType::U32:
    case ScalarType::F32:
      return 4;
    case ScalarType::F64:
      return 8;
  }
  return 0;
}

bool parse_scalar_type(const std::string& word, ScalarType* out) {
  static const std::pair<const char*, ScalarType> table[] = {
      {"char", ScalarType::I8},    {"int8", ScalarType::I8},
      {"uchar", ScalarType::U8},   {"uint8", ScalarType::U8},
      {"short", ScalarType::I16},  {"int16", ScalarType::I16},
      {"ushort", ScalarType::U16}, {"uint16", ScalarType::U16},
      {"int", ScalarType::I32},    {"int32", ScalarType::I32},
      {"uint", ScalarType::U32},   {"uint32", ScalarType::U32},
      {"float", ScalarType::F32},  {"float32", ScalarType::F32},
      {"double", ScalarType::F64}, {"float64", ScalarType::F64},
  };
  for (const auto& [name, type] : table) {
    if (word == name) {
      *out = type;
      return true;
    }
  }
  return false;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::F32;
  bool is_list = false;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  size_t data_offset = 0;  // byte offset of the first payload byte
};

[[noreturn]] void fail(PlyErrorKind kind, const std::string& msg) {
  throw PlyError(kind, msg);
}

Header parse_header(const std::string& file) {
  Header h;
  size_t pos = 0;
  auto next_line = [&](std::string* line) {
    if (pos >= file.size()) return false;
    size_t eol = file.find('\n', pos);
    if (eol == std::string::npos) eol = file.size();
    *line = file.substr(pos, eol - pos);
    if (!line->empty() && line->back() == '\r') line->pop_back();
    pos = eol + 1;
    return true;
  };

  std::string line;
  if (!next_line(&line) || line != "ply")
    fail(PlyErrorKind::MalformedHeader, "ply: missing 'ply' magic line");

  bool saw_format = false, saw_end = false;
  while (next_line(&line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii")
        h.binary = false;
      else if (fmt == "binary_little_endian")
        h.binary = true;
      else
        fail(PlyErrorKind::MalformedHeader, "ply: unsupported format '" + fmt + "'");
      if (ver != "1.0")
        fail(PlyErrorKind::MalformedHeader, "ply: unsupported version '" + ver + "'");
      saw_format = true;
    } else if (word == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0)
        fail(PlyErrorKind::MalformedHeader, "ply: bad element line '" + line + "'");
      e.count = static_cast<size_t>(count);
      h.elements.push_back(std::move(e));
    } else if (word == "property") {
      if (h.elements.empty())
        fail(PlyErrorKind::MalformedHeader, "ply: property before any element");
      Property p;
      std::string type_word;
      ls >> type_word;
      if (type_word == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
      } else {
        if (!parse_scalar_type(type_word, &p.type))
          fail(PlyErrorKind::MalformedHeader,
               "ply: unknown property type '" + type_word + "'");
        ls >> p.name;
      }
      if (p.name.empty())
        fail(PlyErrorKind::MalformedHeader, "ply: unnamed property");
      h.elements.back().properties.push_back(std::move(p));
    } else if (word == "end_header") {
      saw_end = true;
      break;
    } else {
      fail(PlyErrorKind::MalformedHeader, "ply: unknown header line '" + line + "'");
    }
  }
  if (!saw_end) fail(PlyErrorKind::MalformedHeader, "ply: missing end_header");
  if (!saw_format) fail(PlyErrorKind::MalformedHeader, "ply: missing format line");
  h.data_offset = pos;
  return h;
}

double decode_scalar(const uint8_t* p, ScalarType t) {
  // All multi-byte fields are little-endian; memcpy keeps this alias-safe
  // on the little-endian targets this project supports.
  switch (t) {
    case ScalarType::I8:
      return static_cast<int8_t>(*p);
    case ScalarType::U8:
      return *p;
    case ScalarType::I16: {
      int16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case ScalarType::U16: {
      uint16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case ScalarType::I32: {
      int32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case ScalarType::U32: {
      uint32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case ScalarType::F32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case ScalarType::F64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
  }
  return 0.0;
}

struct VertexLayout {
  int xyz_index[3] = {-1, -1, -1};
  int rgb_index[3] = {-1, -1, -1};
  bool has_colors = false;
};

VertexLayout resolve_vertex_layout(const Element& vertex) {
  VertexLayout layout;
  static const char* kAxes[3] = {"x", "y", "z"};
  static const char* kChannels[3] = {"red", "green", "blue"};
  for (size_t i = 0; i < vertex.properties.size(); ++i) {
    const Property& p = vertex.properties[i];
    for (int a = 0; a < 3; ++a) {
      if (p.name == kAxes[a]) {
        if (p.is_list)
          fail(PlyErrorKind::UnsupportedProperty,
               "ply: vertex property '" + p.name + "' must be scalar");
        layout.xyz_index[a] = static_cast<int>(i);
      }
      if (p.name == kChannels[a]) {
        if (p.is_list || p.type != ScalarType::U8)
          fail(PlyErrorKind::UnsupportedProperty,
               "ply: vertex property '" + p.name + "' must be uchar");
        layout.rgb_index[a] = static_cast<int>(i);
      }
    }
    if (p.is_list)
      fail(PlyErrorKind::UnsupportedProperty,
           "ply: list property '" + p.name + "' in vertex element");
  }
  for (int a = 0; a < 3; ++a)
    if (layout.xyz_index[a] < 0)
      fail(PlyErrorKind::MalformedHeader,
           std::string("ply: vertex element lacks property '") + kAxes[a] + "'");
  int rgb_present = (layout.rgb_index[0] >= 0) + (layout.rgb_index[1] >= 0) +
                    (layout.rgb_index[2] >= 0);
  layout.has_colors = rgb_present == 3;
  return layout;
}

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(PlyErrorKind::IoFailure, "ply: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(PlyErrorKind::IoFailure, "ply: read failure on '" + path + "'");
  const std::string file = std::move(buf).str();

  Header header = parse_header(file);

  size_t vertex_index = header.elements.size();
  for (size_t i = 0; i < header.elements.size(); ++i) {
    if (header.elements[i].name == "vertex") {
      vertex_index = i;
      break;
    }
  }
  if (vertex_index == header.elements.size())
    fail(PlyErrorKind::MalformedHeader, "ply: no vertex element");
  const Element& vertex = header.elements[vertex_index];
  VertexLayout layout = resolve_vertex_layout(vertex);

  PointCloud cloud;
  cloud.points.resize(vertex.count);
  if (layout.has_colors) cloud.colors.resize(vertex.count);

  if (header.binary) {
    size_t offset = header.data_offset;
    // Skip whole elements declared before vertex; they must be scalar-only
    // for the stride to be known.
    for (size_t e = 0; e < vertex_index; ++e) {
      size_t stride = 0;
      for (const Property& p : header.elements[e].properties) {
        if (p.is_list)
          fail(PlyErrorKind::UnsupportedProperty,
               "ply: cannot skip list property '" + p.name + "' in element '" +
                   header.elements[e].name + "'");
        stride += scalar_size(p.type);
      }
      offset += stride * header.elements[e].count;
    }
    size_t stride = 0;
    std::vector<size_t> prop_offsets(vertex.properties.size());
    for (size_t i = 0; i < vertex.properties.size(); ++i) {
      prop_offsets[i] = stride;
      stride += scalar_size(vertex.properties[i].type);
    }
    if (offset + stride * vertex.count > file.size())
      fail(PlyErrorKind::TruncatedPayload,
           "ply: vertex element declares " + std::to_string(vertex.count) +
               " entries but the payload is shorter");
    const uint8_t* base = reinterpret_cast<const uint8_t*>(file.data()) + offset;
    for (size_t i = 0; i < vertex.count; ++i) {
      const uint8_t* row = base + i * stride;
      for (int a = 0; a < 3; ++a)
        cloud.points[i][a] = decode_scalar(
            row + prop_offsets[layout.xyz_index[a]],
            vertex.properties[layout.xyz_index[a]].type);
      if (layout.has_colors)
        for (int a = 0; a < 3; ++a)
          cloud.colors[i][a] = row[prop_offsets[layout.rgb_index[a]]];
    }
  } else {
    std::istringstream data(file.substr(header.data_offset));
    // ASCII payloads are whitespace-delimited; elements before vertex are
    // skipped token by token.
    auto next_token = [&](const char* what) {
      std::string tok;
      if (!(data >> tok))
        fail(PlyErrorKind::TruncatedPayload,
             std::string("ply: payload ended while reading ") + what);
      return tok;
    };
    for (size_t e = 0; e < vertex_index; ++e) {
      const Element& el = header.elements[e];
      for (const Property& p : el.properties)
        if (p.is_list)
          fail(PlyErrorKind::UnsupportedProperty,
               "ply: cannot skip list property '" + p.name + "' in element '" +
                   el.name + "'");
      for (size_t i = 0; i < el.count * el.properties.size(); ++i)
        next_token(el.name.c_str());
    }
    for (size_t i = 0; i < vertex.count; ++i) {
      std::vector<double> row(vertex.properties.size());
      for (size_t p = 0; p < vertex.properties.size(); ++p) {
        std::string tok = next_token("vertex");
        char* end = nullptr;
        row[p] = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
          fail(PlyErrorKind::InvalidValue,
               "ply: bad numeric token '" + tok + "' in vertex " +
                   std::to_string(i));
        // float32 properties carry float32 values, in ASCII too.
        if (vertex.properties[p].type == ScalarType::F32)
          row[p] = double(float(row[p]));
      }
      for (int a = 0; a < 3; ++a) cloud.points[i][a] = row[layout.xyz_index[a]];
      if (layout.has_colors)
        for (int a = 0; a < 3; ++a) {
          double c = row[layout.rgb_index[a]];
          if (c < 0 || c > 255 || std::floor(c) != c)
            fail(PlyErrorKind::InvalidValue,
                 "ply: color value out of range in vertex " + std::to_string(i));
          cloud.colors[i][a] = static_cast<uint8_t>(c);
        }
    }
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::string& path, PlyFormat format) {
  if (cloud.has_colors() && cloud.colors.size() != cloud.points.size())
    throw InternalError("write_ply: color count does not match point count");

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(PlyErrorKind::IoFailure, "ply: cannot open '" + path + "' for writing");

  const bool binary = format == PlyFormat::BinaryLittleEndian;
  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << cloud.points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  if (binary) {
    for (size_t i = 0; i < cloud.points.size(); ++i) {
      float xyz[3] = {static_cast<float>(cloud.points[i][0]),
                      static_cast<float>(cloud.points[i][1]),
                      static_cast<float>(cloud.points[i][2])};
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      if (cloud.has_colors())
        out.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
    }
  } else {
    char line[128];
    for (size_t i = 0; i < cloud.points.size(); ++i) {
      // %.9g round-trips float32 exactly.
      int n = std::snprintf(line, sizeof(line), "%.9g %.9g %.9g",
                            static_cast<float>(cloud.points[i][0]),
                            static_cast<float>(cloud.points[i][1]),
                            static_cast<float>(cloud.points[i][2]));
      out.write(line, n);
      if (cloud.has_colors()) {
        n = std::snprintf(line, sizeof(line), " %u %u %u", cloud.colors[i][0],
                          cloud.colors[i][1], cloud.colors[i][2]);
        out.write(line, n);
      }
      out.put('\n');
    }
  }
  out.flush();
  if (!out) fail(PlyErrorKind::IoFailure, "ply: write failure on '" + path + "'");
}

}  // namespace nirpcc
