#pragma once

#include <string>

#include "gsurf/image.hpp"

namespace gsurf {

// Depth maps travel as 16-bit gray PNG storing round(depth / depth_max *
// 65535) with depth_max in a JSON sidecar, so a round trip stays within one
// quantization step of depth_max / 65535.
void write_depth_png(const std::string& png_path, const std::string& json_path,
                     const Image& depth);
Image read_depth_png(const std::string& png_path, const std::string& json_path);

}  // namespace gsurf
