/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_ERROR_HPP_
#define SEGPL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace segpl {

// Process exit codes used by the command-line tool. Every library error maps
// onto exactly one of them.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid hyperparameters, unknown presets, bad class maps, bad CLI values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

/// Malformed or inconsistent input data (files, sidecars, array shapes).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape error: " + what) {}
};

class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError("format error: " + what) {}
};

/// Checkpoint or archive failed its checksum or version check.
class IntegrityError : public DataError {
 public:
  explicit IntegrityError(const std::string& what)
      : DataError("integrity error: " + what) {}
};

/// Operation needs a model feature the loaded model does not have
/// (e.g. uncertainty sampling without a threshold head).
class CapabilityError : public ConfigError {
 public:
  explicit CapabilityError(const std::string& what)
      : ConfigError("capability error: " + what) {}
};

/// Non-finite loss or activation during training.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, ExitCode::kNumeric) {}
};

}  // namespace segpl

#endif  // SEGPL_ERROR_HPP_
