#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace comptag::io {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(line_number, record)` for every non-blank line; line numbers
/// are 1-based. A line that is not valid JSON raises MalformedRecord.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

}  // namespace comptag::io
