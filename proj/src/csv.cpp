#include "inode/csv.hpp"

#include <cstdio>

#include "inode/errors.hpp"

namespace inode {

std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path, std::ios::trunc), path_(path) {
  if (!out_) throw FormatError("cannot open csv for writing: " + path);
}

static bool needs_quoting(const std::string& f) {
  return f.find_first_of(",\"\r\n") != std::string::npos;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    if (needs_quoting(fields[i])) {
      out_ << '"';
      for (char ch : fields[i]) {
        if (ch == '"') out_ << '"';
        out_ << ch;
      }
      out_ << '"';
    } else {
      out_ << fields[i];
    }
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.flush();
  out_.close();
  if (out_.fail()) throw FormatError("csv write failed: " + path_);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open csv: " + path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> cur;
  std::string field;
  bool quoted = false;
  bool row_open = false;
  char ch;
  while (in.get(ch)) {
    row_open = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cur.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      cur.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(cur));
      cur.clear();
      row_open = false;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (row_open) {
    cur.push_back(std::move(field));
    rows.push_back(std::move(cur));
  }
  return rows;
}

}  // namespace inode
