#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace absa {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kData)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what, ExitCode::kNumeric) {}
};

// A class or tag index outside its label set.
class LabelError : public Error {
 public:
  explicit LabelError(const std::string& what) : Error(what, ExitCode::kData) {}
};

// A caller violated an API precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(what, ExitCode::kNumeric) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, ExitCode::kNumeric) {}
};

class VocabError : public Error {
 public:
  explicit VocabError(const std::string& what) : Error(what, ExitCode::kData) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

// Malformed input file. `line` is 1-based, 0 when unknown.
class IngestionError : public DataError {
 public:
  IngestionError(const std::string& what, std::size_t line = 0)
      : DataError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Character offsets that do not fit the sentence they annotate.
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

// Checkpoint bytes failed a length or checksum test.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class IncompatibleVersionError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace absa
