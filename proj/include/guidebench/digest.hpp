// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace guidebench {

std::array<std::uint8_t, 32> sha256(std::string_view data);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Hex SHA-256 of a file's bytes. Throws std::runtime_error if unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes atomically (temp file + rename) so readers never see partial output.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace guidebench
