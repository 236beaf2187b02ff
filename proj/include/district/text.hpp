#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace district {

bool is_space(char c) noexcept;

/// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

/// Trims the ends and collapses every interior whitespace run to one space.
std::string collapse_whitespace(std::string_view s);

/// Splits on whitespace runs; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);

/// Non-blank lines, without their trailing '\n' (and '\r').
std::vector<std::string_view> split_lines(std::string_view s);

/// Byte offset of the first invalid UTF-8 sequence, or nullopt when valid.
std::optional<std::size_t> find_invalid_utf8(std::string_view s) noexcept;

/// 64-bit FNV-1a. Stable across platforms; used wherever a persisted or
/// reproducible hash is needed.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace district
