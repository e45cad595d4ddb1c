#pragma once

#include <stdexcept>
#include <string>

namespace inode {

// Exit-code mapping lives in cli::run: ConfigError -> 3, MissingArtifact -> 2,
// everything else -> 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& msg, double t)
      : std::runtime_error(msg + " (t=" + std::to_string(t) + ")"), time(t) {}
  double time;
};

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace inode
