#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace focalmed {

/// One normalized token. Offsets are byte positions in the original text, end exclusive.
struct Token {
    std::string surface;
    std::string normalized;
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const Token&, const Token&) = default;
};

/// Lowercases and splits `text` into tokens.
///
/// A token is a maximal run of letters and digits; a single hyphen is kept
/// when it sits between two token characters ("covid-19"). Every other
/// character separates tokens. Bytes >= 0x80 are treated as letters so UTF-8
/// words stay whole; only ASCII is case-folded.
std::vector<Token> normalize(std::string_view text);

/// Normalized tokens of `text` joined by single spaces; the lexicon key form.
std::string normalize_phrase(std::string_view text);

std::string join_tokens(const std::vector<Token>& tokens, std::size_t begin, std::size_t end);

/// Number of Unicode code points in a UTF-8 string (invalid bytes count as one each).
std::size_t utf8_length(std::string_view s);

std::u32string utf8_decode(std::string_view s);

} // namespace focalmed
