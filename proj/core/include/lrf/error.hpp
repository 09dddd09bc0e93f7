#pragma once

#include <stdexcept>
#include <string>

namespace lrf {

// Error categories map 1:1 onto CLI exit codes (see tools/).
enum class ErrorCode : int {
  ok = 0,
  generic = 1,
  format = 2,
  dimension = 3,
  rank = 4,
  numeric = 5,
  training = 6,
  argument = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what)
      : Error(ErrorCode::dimension, what) {}
};

struct RankError : Error {
  explicit RankError(const std::string& what) : Error(ErrorCode::rank, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorCode::numeric, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what)
      : Error(ErrorCode::format, what) {}
};

struct TrainingError : Error {
  TrainingError(const std::string& what, int epoch)
      : Error(ErrorCode::training, what), epoch(epoch) {}
  int epoch;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& what)
      : Error(ErrorCode::argument, what) {}
};

}  // namespace lrf
