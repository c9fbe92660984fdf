#pragma once

#include <string>

#include "gsurf/image.hpp"

namespace gsurf {

// Decodes 8-bit gray/RGB/RGBA (alpha dropped, palette expanded) to channels
// in [0,1]; 16-bit inputs keep their full precision. Throws IoError.
Image read_png(const std::string& path);

// 3-channel [0,1] to 8-bit RGB; values are clamped and rounded.
void write_png_rgb8(const std::string& path, const Image& img);

// 1-channel [0,1] to 8-bit grayscale.
void write_png_gray8(const std::string& path, const Image& img);

// 1-channel [0,1] to 16-bit grayscale; the depth-map container.
void write_png_gray16(const std::string& path, const Image& img);

}  // namespace gsurf
