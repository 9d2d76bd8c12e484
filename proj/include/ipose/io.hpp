#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ipose {

// All file outputs go through a temp file + rename so readers never observe a
// partial write.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Shortest round-trip decimal form of a double.
std::string fmt_double(double v);

std::vector<std::string> split(const std::string& line, char sep);

std::uint64_t fnv1a64(const std::string& bytes);

// Resolves a config name: the path itself if it exists, otherwise relative to
// $IPOSE_CONFIG_DIR when that is set.
std::string resolve_config_path(const std::string& name);

}  // namespace ipose
