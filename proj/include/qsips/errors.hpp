#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qsips {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An order or index lies outside the supported table range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (shape mismatch, bad length, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A size cap or tail-mass tolerance could not be honoured.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class EmptySampleError : public Error {
 public:
  using Error::Error;
};

class UndefinedFanoError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOrderError : public Error {
 public:
  using Error::Error;
};

class DegeneratePhasesError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, int iterations, double last_step)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", last relative step=" + std::to_string(last_step) + ")"),
        iterations_(iterations),
        last_step_(last_step) {}

  int iterations() const noexcept { return iterations_; }
  double last_step() const noexcept { return last_step_; }

 private:
  int iterations_;
  double last_step_;
};

// Corrupt or truncated binary container.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Invalid scenario configuration; key_path is a JSON-pointer style location.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path_(key_path) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace qsips
