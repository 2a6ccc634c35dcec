// Copyright 2026 The stylemix Authors
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

namespace stylemix {

/// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid argument value (out-of-range label, bad probability, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration; key() names the offending config key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& msg)
        : Error(key + ": " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// File-format or filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite; epoch() is the epoch where it happened.
class DivergenceError : public Error {
public:
    explicit DivergenceError(int epoch)
        : Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace stylemix
