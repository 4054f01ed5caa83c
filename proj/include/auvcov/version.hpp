#pragma once

namespace auvcov {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the checkpoint layout changes; loaders reject other values.
inline constexpr int kCheckpointVersion = 1;

}  // namespace auvcov
