// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
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

namespace sdet {

// Shapes, channel counts or strides that do not fit together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller-provided data (non-finite coordinates, length mismatches).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content. The message carries the file and line/offset.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API used out of contract (backward on a non-scalar, missing checkpoint).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SDET_CHECK(cond, Err, msg)                 \
  do {                                             \
    if (!(cond)) throw ::sdet::Err(std::string(msg)); \
  } while (0)

}  // namespace sdet
