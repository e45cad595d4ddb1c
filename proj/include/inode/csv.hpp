#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace inode {

// Shortest representation with 9 significant digits.
std::string fmt_g9(double v);

// Row-at-a-time CSV writer, RFC-4180-style quoting.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace inode
