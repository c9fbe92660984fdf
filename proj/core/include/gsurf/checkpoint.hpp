#pragma once

#include <cstdint>
#include <string>

#include "gsurf/trainer.hpp"

namespace gsurf {

// Training snapshot: the config echo, the raw surfels, the Adam moments and
// the completed-iteration counter. Resuming from a view-count multiple that
// is also a densification boundary replays the uninterrupted run bitwise.
struct Checkpoint {
  TrainConfig config;
  TrainState state;
  std::uint64_t seed = 0;
};

// "GSRF" magic, a version word, little-endian length-prefixed arrays and a
// trailing crc32. Round-trips bitwise.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gsurf
