#include "gsurf/depth_io.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "gsurf/errors.hpp"
#include "gsurf/png_io.hpp"

namespace gsurf {

void write_depth_png(const std::string& png_path, const std::string& json_path,
                     const Image& depth) {
  if (depth.channels != 1)
    throw IoError(IoErrorKind::write_failure, png_path, "depth must be single channel");
  double depth_max = 0.0;
  for (double v : depth.v) depth_max = std::max(depth_max, v);
  if (depth_max <= 0.0) depth_max = 1.0;

  Image scaled(depth.height, depth.width, 1);
  for (std::size_t i = 0; i < depth.v.size(); ++i)
    scaled.v[i] = std::clamp(depth.v[i] / depth_max, 0.0, 1.0);
  write_png_gray16(png_path, scaled);

  nlohmann::json meta;
  meta["depth_max"] = depth_max;
  std::ofstream out(json_path);
  if (!out) throw IoError(IoErrorKind::write_failure, json_path, "cannot open for writing");
  out << meta.dump(2) << "\n";
}

Image read_depth_png(const std::string& png_path, const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError(IoErrorKind::missing_file, json_path, "cannot open");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorKind::malformed_json, json_path, e.what());
  }
  if (!meta.contains("depth_max") || !meta["depth_max"].is_number())
    throw IoError(IoErrorKind::missing_field, json_path, "missing field 'depth_max'");
  const double depth_max = meta["depth_max"].get<double>();

  Image depth = read_png(png_path);
  if (depth.channels != 1)
    throw IoError(IoErrorKind::bad_image, png_path, "depth png must be single channel");
  for (double& v : depth.v) v *= depth_max;
  return depth;
}

}  // namespace gsurf
