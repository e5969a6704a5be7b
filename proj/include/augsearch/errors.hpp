// Copyright 2026 The augsearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace augsearch {

/// Root of every error the library throws. `exit_code()` is the CLI mapping:
/// 2 config, 3 data, 4 numeric.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Bad configuration values (ranges, counts, duplicate op names).
class InvalidConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Bad call arguments (dimension mismatch, out-of-range index, empty batch).
class InvalidArgument : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Malformed input file (CIFAR records, checkpoints, policy documents).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// A policy or checkpoint that parses but does not match what it claims.
class LoadError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// ||g|| (or ||v||) is zero, so the cosine objective is undefined.
class DegenerateGradient : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Non-finite values where finite ones are required.
class InvalidState : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Pretraining diverged (loss became NaN/Inf).
class TrainingFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace augsearch
