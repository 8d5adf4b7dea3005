#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace earth::text {

std::string trim(std::string_view s);

// Number of Unicode code points. Invalid bytes count as one each.
std::size_t char_length(std::string_view utf8);

// Lowercase, drop every code point that is neither alphanumeric nor
// whitespace, then split on whitespace. Locale-independent for ASCII and
// Unicode-aware through the C.UTF-8 ctype tables when available.
std::vector<std::string> normalize_tokens(std::string_view utf8);

std::vector<std::string> split_lines(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);

// FNV-1a, stable across platforms and runs (std::hash is not).
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t mix_hash(std::uint64_t a, std::uint64_t b);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view encoded);

// ISO-8601 UTC timestamp with millisecond precision.
std::string utc_timestamp_now();

}  // namespace earth::text
