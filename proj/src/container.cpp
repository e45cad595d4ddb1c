#include "inode/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "inode/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts unsupported");

namespace inode {

void write_container(const std::string& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, std::span<const double>>>& arrays) {
  nlohmann::json desc = nlohmann::json::array();
  for (const auto& [name, data] : arrays) {
    desc.push_back({{"name", name}, {"count", data.size()}});
  }
  header["arrays"] = std::move(desc);
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(kContainerMagic, sizeof(kContainerMagic));
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, data] : arrays) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw FormatError("short write: " + path);
}

Container read_container(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("no such file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open: " + path);

  char magic[sizeof(kContainerMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw FormatError("bad magic in " + path);
  }
  std::uint32_t hlen = 0;
  if (!in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen))) {
    throw FormatError("truncated header length in " + path);
  }
  std::string htext(hlen, '\0');
  if (!in.read(htext.data(), hlen)) throw FormatError("truncated header in " + path);

  Container c;
  try {
    c.header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("unparseable header in " + path + ": " + e.what());
  }
  if (!c.header.contains("arrays") || !c.header["arrays"].is_array()) {
    throw FormatError("header missing arrays descriptor in " + path);
  }
  for (const auto& d : c.header["arrays"]) {
    const std::string name = d.at("name").get<std::string>();
    const std::size_t count = d.at("count").get<std::size_t>();
    std::vector<double> data(count);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
      throw FormatError("truncated payload for array '" + name + "' in " + path);
    }
    c.arrays.emplace(name, std::move(data));
  }
  return c;
}

}  // namespace inode
