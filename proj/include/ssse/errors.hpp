#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace ssse {

/// Caller supplied something malformed: wrong dimensions, out-of-range ids,
/// bad configuration values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested operation is not defined for this model family or size.
class Unsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite or otherwise unusable value.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what,
                        std::optional<std::int64_t> sample_id = std::nullopt)
      : std::runtime_error(sample_id ? what + " (sample id " + std::to_string(*sample_id) + ")"
                                     : what),
        sample_id_(sample_id) {}

  std::optional<std::int64_t> sample_id() const { return sample_id_; }

 private:
  std::optional<std::int64_t> sample_id_;
};

/// Optimizer diverged.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, int epoch)
      : NumericError(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}

  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Malformed file contents. `offset` is a byte offset for binary containers
/// and a 1-based row number for text formats.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset, const char* unit = "byte")
      : std::runtime_error(what + " (" + unit + " " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// The inverse Fisher was built at a different parameter vector.
class StaleFisher : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssse
