#pragma once

#include <cstddef>
#include <string>
#include <string_view>

// Small UTF-8 helpers. Case mapping covers ASCII, Latin-1, Latin Extended-A,
// basic Greek and Cyrillic; everything else maps to itself.
namespace dslr::text {

/// Decodes the code point starting at byte `i` and advances `i`. Malformed
/// sequences decode to U+FFFD and consume one byte.
char32_t decode(std::string_view s, std::size_t& i) noexcept;

void append_utf8(std::string& out, char32_t cp);

char32_t to_lower(char32_t cp) noexcept;
bool is_upper(char32_t cp) noexcept;
bool is_alnum(char32_t cp) noexcept;
bool is_space(char32_t cp) noexcept;

std::string lowercase(std::string_view s);

/// Whitespace runs become one ASCII space; leading/trailing whitespace removed.
std::string collapse_whitespace(std::string_view s);

std::string_view trim(std::string_view s) noexcept;

std::size_t count_whitespace_tokens(std::string_view s) noexcept;

}  // namespace dslr::text
