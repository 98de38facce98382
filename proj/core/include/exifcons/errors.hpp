#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace exifcons {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  kUsage,    // bad flags or arguments
  kData,     // input data violates a precondition
  kRuntime,  // anything else
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Malformed container contents. `offset` is the absolute byte offset in the
/// file where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::kData,
              what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

/// Image smaller than the patch size in at least one dimension.
class TooSmallError : public Error {
 public:
  TooSmallError(int width, int height, int required)
      : Error(ErrorKind::kData,
              "image too small: " + std::to_string(width) + "x" +
                  std::to_string(height) + ", need at least " +
                  std::to_string(required) + " in both dimensions") {}
};

/// No attribute (or not enough photos) to build the requested batch.
class UnsatisfiableError : public Error {
 public:
  UnsatisfiableError(const std::string& what,
                     std::vector<std::string> deficient = {})
      : Error(ErrorKind::kData, what), deficient_(std::move(deficient)) {}
  const std::vector<std::string>& deficient() const { return deficient_; }

 private:
  std::vector<std::string> deficient_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class DegenerateBatchError : public Error {
 public:
  DegenerateBatchError()
      : Error(ErrorKind::kData, "degenerate batch: every label slot is masked") {}
};

class DatasetError : public Error {
 public:
  explicit DatasetError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorKind::kUsage, what) {}
};

}  // namespace exifcons
