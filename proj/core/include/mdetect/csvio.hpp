#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mdetect {

/// Shortest decimal form that parses back to the same bits (to_chars).
std::string format_double(double v);

/// Strict double parse of a full token. Throws on trailing garbage or NaN
/// literals unless allow_nonfinite is set.
double parse_double(std::string_view token, bool allow_nonfinite = false);

std::int64_t parse_int(std::string_view token);

/// Splits one CSV record on commas. No quoting: none of the formats written
/// by this project ever embed commas in fields.
std::vector<std::string_view> split_csv_line(std::string_view line);

/// Whole-file helpers. Text written with LF endings regardless of platform.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Binary vector-of-double files used by model persistence.
/// Layout: "MDBIN1\n" magic, u64 count (little endian), then raw doubles.
void write_doubles(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_doubles(const std::filesystem::path& path);

/// FNV-1a over a string, rendered as 16 hex digits. Stable stamp for
/// configs embedded in artifacts.
std::string fnv1a_hex(std::string_view data);

}  // namespace mdetect
