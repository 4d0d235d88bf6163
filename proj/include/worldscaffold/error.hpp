#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace worldscaffold {

enum class ErrorKind { InvalidInput, Parse, MissingDependency, Validation };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorKind::InvalidInput, what) {}
};

// Malformed artifact. Carries the offending path and the byte offset at which
// decoding failed (0 when the failure is not positional).
class ParseError : public Error {
 public:
  ParseError(std::string path, std::uint64_t offset, const std::string& what)
      : Error(ErrorKind::Parse, path + " (byte " + std::to_string(offset) + "): " + what),
        path_(std::move(path)),
        offset_(offset) {}

  const std::string& path() const noexcept { return path_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string path_;
  std::uint64_t offset_;
};

class MissingDependency : public Error {
 public:
  explicit MissingDependency(std::string artifact)
      : Error(ErrorKind::MissingDependency, "missing dependency: " + artifact),
        artifact_(std::move(artifact)) {}

  const std::string& artifact() const noexcept { return artifact_; }

 private:
  std::string artifact_;
};

}  // namespace worldscaffold
