#pragma once

// UTF-8 helpers. All offsets exposed by the toolkit count Unicode scalar
// values, never bytes.

#include <cstddef>
#include <string>
#include <string_view>

namespace laca::text {

/// Decodes UTF-8. Throws InvalidUtf8 on malformed input.
std::u32string to_utf32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);

/// Number of scalar values in a UTF-8 string.
std::size_t length(std::string_view utf8);

/// Slice [from, to) in scalar-value offsets; clamps to the string length.
std::string slice(std::string_view utf8, std::size_t from, std::size_t to);

bool is_space(char32_t c);
bool is_punct(char32_t c);

/// Simple one-to-one lowercase mapping for Latin, Greek and Cyrillic.
char32_t fold(char32_t c);

std::string trim(std::string_view s);

/// Trims the ends and collapses internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s);

std::string casefold(std::string_view s);

/// collapse_whitespace followed by casefold; the comparison key for aspects.
std::string normalize(std::string_view s);

}  // namespace laca::text
