#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace uqeval {

using json = nlohmann::ordered_json;

// Reads a whole JSONL file; blank lines are skipped. Parse failures name the
// file and 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

// Counts non-blank lines (used for checkpoint validation).
std::size_t count_jsonl_lines(const std::filesystem::path& path);

// Serializes one record the way every stage output is written: compact dump,
// one '\n' terminator, no locale dependence.
std::string jsonl_line(const json& record);

// Whole-file write via temp file + rename in the same directory.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view data);

// SHA-256 of a file's contents, lowercase hex.
std::string sha256_file(const std::filesystem::path& path);

} // namespace uqeval
