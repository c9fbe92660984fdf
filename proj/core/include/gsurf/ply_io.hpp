#pragma once

#include <string>

#include "gsurf/extract.hpp"

namespace gsurf {

// Binary little-endian PLY: float x,y,z,nx,ny,nz plus uchar red,green,blue
// when colors are present. Normals default to zero when absent in `cloud`.
void write_ply(const std::string& path, const OrientedPointCloud& cloud);

// Reads ascii or binary_little_endian vertex elements. Positions are
// required; normals and colors are filled when the header declares them.
// Non-vertex elements after the vertex data are ignored. Throws IoError.
OrientedPointCloud read_ply(const std::string& path);

}  // namespace gsurf
