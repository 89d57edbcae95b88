/* Copyright 2026 The ulrseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ULRSEG_HASHING_H_
#define ULRSEG_HASHING_H_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "ulrseg/autograd.h"

namespace ulrseg {

// Lowercase hex SHA-256 digests.
std::string Sha256Hex(std::span<const unsigned char> bytes);
std::string Sha256Hex(std::string_view text);
std::string Sha256File(const std::filesystem::path& path);

// Digest over the names, shapes and raw values of every parameter.
std::string HashParams(const nn::ParamList& params);

}  // namespace ulrseg

#endif  // ULRSEG_HASHING_H_
