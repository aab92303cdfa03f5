#include "focalmed/text.hpp"

namespace focalmed {

namespace {

bool is_token_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char fold(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

} // namespace

std::vector<Token> normalize(std::string_view text) {
    std::vector<Token> tokens;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_token_char(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        Token tok;
        tok.begin = i;
        while (i < n) {
            const auto c = static_cast<unsigned char>(text[i]);
            if (is_token_char(c)) {
                tok.normalized.push_back(fold(c));
                ++i;
            } else if (c == '-' && i + 1 < n && is_token_char(static_cast<unsigned char>(text[i + 1]))) {
                tok.normalized.push_back('-');
                ++i;
            } else {
                break;
            }
        }
        tok.end = i;
        tok.surface = std::string(text.substr(tok.begin, tok.end - tok.begin));
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

std::string join_tokens(const std::vector<Token>& tokens, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out.push_back(' ');
        out += tokens[i].normalized;
    }
    return out;
}

std::string normalize_phrase(std::string_view text) {
    const auto tokens = normalize(text);
    return join_tokens(tokens, 0, tokens.size());
}

std::u32string utf8_decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto lead = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        char32_t cp = lead;
        if (lead >= 0xF0 && lead < 0xF8) {
            extra = 3;
            cp = lead & 0x07;
        } else if (lead >= 0xE0 && lead < 0xF0) {
            extra = 2;
            cp = lead & 0x0F;
        } else if (lead >= 0xC0 && lead < 0xE0) {
            extra = 1;
            cp = lead & 0x1F;
        }
        bool valid = i + extra < s.size();
        for (std::size_t k = 1; valid && k <= extra; ++k) {
            const auto cont = static_cast<unsigned char>(s[i + k]);
            valid = (cont & 0xC0) == 0x80;
            cp = (cp << 6) | (cont & 0x3F);
        }
        if (!valid) {
            // invalid or truncated sequence: keep the raw byte
            out.push_back(lead);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

std::size_t utf8_length(std::string_view s) { return utf8_decode(s).size(); }

} // namespace focalmed
