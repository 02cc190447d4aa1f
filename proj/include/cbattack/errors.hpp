// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
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

namespace cbattack {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values (counts, dimensions, scheme names, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable feature files.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// A vector that cannot be brought to unit norm.
class NormalizationError : public IngestionError {
public:
    using IngestionError::IngestionError;
};

/// Dataset does not satisfy the enrol/verify protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

} // namespace cbattack
