/*
Copyright 2026 The vtlab Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vtlab {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset), has_offset_(true) {}

  bool has_offset() const { return has_offset_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_ = 0;
  bool has_offset_ = false;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CorruptPayloadError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Clean and trojaned checkpoints disagree on identifiers, shapes or scales.
class CheckpointIncompatibleError : public Error {
 public:
  using Error::Error;
};

// A flip record entry whose old bit does not match the checkpoint it is applied to.
class StaleRecordError : public Error {
 public:
  using Error::Error;
};

// A reconstructed artifact does not match the one it was derived from.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtlab
