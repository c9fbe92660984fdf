#include "gsurf/ply_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gsurf/errors.hpp"

namespace gsurf {
namespace {

struct Property {
  std::string name;
  std::string type;
};

std::size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

double decode_scalar(const unsigned char* p, const std::string& t) {
  if (t == "float" || t == "float32") {
    float f;
    std::memcpy(&f, p, 4);
    return f;
  }
  if (t == "double" || t == "float64") {
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  if (t == "uchar" || t == "uint8") return *p;
  if (t == "char" || t == "int8") return static_cast<signed char>(*p);
  if (t == "ushort" || t == "uint16") {
    std::uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (t == "short" || t == "int16") {
    std::int16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (t == "uint" || t == "uint32") {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
  }
  std::int32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

// Color channels arrive as bytes in [0,255] or floats in [0,1].
double decode_color(double raw, const std::string& type) {
  if (type == "float" || type == "float32" || type == "double" || type == "float64")
    return raw;
  return raw / 255.0;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

void write_ply(const std::string& path, const OrientedPointCloud& cloud) {
  const std::size_t n = cloud.positions.size();
  const bool with_colors = !cloud.colors.empty();
  if (with_colors && cloud.colors.size() != n)
    throw IoError(IoErrorKind::write_failure, path, "color count mismatch");
  if (!cloud.normals.empty() && cloud.normals.size() != n)
    throw IoError(IoErrorKind::write_failure, path, "normal count mismatch");

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << n << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "property float nx\nproperty float ny\nproperty float nz\n";
  if (with_colors)
    header << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  header << "end_header\n";

  std::string body;
  body.reserve(n * (24 + (with_colors ? 3 : 0)));
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = cloud.positions[i];
    const Vec3 nrm = cloud.normals.empty() ? Vec3::Zero() : cloud.normals[i];
    put(body, static_cast<float>(p.x()));
    put(body, static_cast<float>(p.y()));
    put(body, static_cast<float>(p.z()));
    put(body, static_cast<float>(nrm.x()));
    put(body, static_cast<float>(nrm.y()));
    put(body, static_cast<float>(nrm.z()));
    if (with_colors)
      for (int c = 0; c < 3; ++c) {
        double v = cloud.colors[i][c];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        put(body, static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::write_failure, path, "cannot open for writing");
  out << header.str();
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError(IoErrorKind::write_failure, path, "short write");
}

OrientedPointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::missing_file, path, "cannot open");

  std::string line;
  if (!std::getline(in, line)) throw IoError(IoErrorKind::bad_ply, path, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw IoError(IoErrorKind::bad_ply, path, "missing ply magic");

  bool binary = false;
  bool format_seen = false;
  bool vertex_declared = false;
  std::size_t vertex_count = 0;
  std::vector<Property> props;
  bool in_vertex = false;
  bool vertex_first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string kind;
      ls >> kind;
      if (kind == "ascii")
        binary = false;
      else if (kind == "binary_little_endian")
        binary = true;
      else
        throw IoError(IoErrorKind::bad_ply, path, "unsupported format " + kind);
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_declared = true;
        vertex_count = count;
      } else if (!vertex_declared) {
        // A non-vertex element before the vertices would desync the reader.
        vertex_first = false;
      }
    } else if (tok == "property") {
      if (!in_vertex) continue;
      Property p;
      ls >> p.type;
      if (p.type == "list")
        throw IoError(IoErrorKind::bad_ply, path, "list property on vertex element");
      ls >> p.name;
      if (type_size(p.type) == 0)
        throw IoError(IoErrorKind::bad_ply, path, "unknown property type " + p.type);
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else {
      throw IoError(IoErrorKind::bad_ply, path, "unexpected header token " + tok);
    }
  }
  if (!format_seen) throw IoError(IoErrorKind::bad_ply, path, "missing format line");
  if (!vertex_declared || props.empty())
    throw IoError(IoErrorKind::bad_ply, path, "no vertex element");
  if (!vertex_first)
    throw IoError(IoErrorKind::bad_ply, path, "vertex element is not first");

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ir = -1, ig = -1, ib = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    const std::string& nm = props[i].name;
    if (nm == "x") ix = i;
    else if (nm == "y") iy = i;
    else if (nm == "z") iz = i;
    else if (nm == "nx") inx = i;
    else if (nm == "ny") iny = i;
    else if (nm == "nz") inz = i;
    else if (nm == "red" || nm == "r") ir = i;
    else if (nm == "green" || nm == "g") ig = i;
    else if (nm == "blue" || nm == "b") ib = i;
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw IoError(IoErrorKind::bad_ply, path, "vertex element lacks x/y/z");
  const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;
  const bool has_colors = ir >= 0 && ig >= 0 && ib >= 0;

  OrientedPointCloud cloud;
  cloud.positions.reserve(vertex_count);
  if (has_normals) cloud.normals.reserve(vertex_count);
  if (has_colors) cloud.colors.reserve(vertex_count);

  std::vector<double> row(props.size());
  if (binary) {
    std::size_t stride = 0;
    std::vector<std::size_t> offsets(props.size());
    for (std::size_t i = 0; i < props.size(); ++i) {
      offsets[i] = stride;
      stride += type_size(props[i].type);
    }
    std::vector<unsigned char> buf(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(stride));
      if (static_cast<std::size_t>(in.gcount()) != stride)
        throw IoError(IoErrorKind::truncated, path, "vertex data ends early");
      for (std::size_t i = 0; i < props.size(); ++i)
        row[i] = decode_scalar(buf.data() + offsets[i], props[i].type);
      cloud.positions.emplace_back(row[ix], row[iy], row[iz]);
      if (has_normals) cloud.normals.emplace_back(row[inx], row[iny], row[inz]);
      if (has_colors)
        cloud.colors.emplace_back(decode_color(row[ir], props[ir].type),
                                  decode_color(row[ig], props[ig].type),
                                  decode_color(row[ib], props[ib].type));
    }
  } else {
    for (std::size_t v = 0; v < vertex_count; ++v) {
      for (std::size_t i = 0; i < props.size(); ++i)
        if (!(in >> row[i]))
          throw IoError(IoErrorKind::truncated, path, "vertex data ends early");
      cloud.positions.emplace_back(row[ix], row[iy], row[iz]);
      if (has_normals) cloud.normals.emplace_back(row[inx], row[iny], row[inz]);
      if (has_colors)
        cloud.colors.emplace_back(decode_color(row[ir], props[ir].type),
                                  decode_color(row[ig], props[ig].type),
                                  decode_color(row[ib], props[ib].type));
    }
  }
  return cloud;
}

}  // namespace gsurf
