#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace inode {

// Binary container: 8-byte magic, u32 little-endian header length, JSON
// header, then the raw little-endian float64 payload of each array in header
// order. The writer appends an "arrays" descriptor list to the header.
inline constexpr char kContainerMagic[8] = {'I', 'N', 'O', 'D', 'E', 'B', 'I', 'N'};

struct Container {
  nlohmann::json header;
  std::map<std::string, std::vector<double>> arrays;
};

void write_container(const std::string& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, std::span<const double>>>& arrays);

// Throws MissingArtifact if the file does not exist, FormatError on anything
// malformed or truncated.
Container read_container(const std::string& path);

}  // namespace inode
