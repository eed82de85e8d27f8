#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace noteqa::text {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

// Collapses every whitespace run (including line breaks) to a single space
// and trims the ends. Note sentences are kept single-line this way.
inline std::string normalize_inline(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

// Collapses space/tab runs within each line but preserves line breaks.
// Used for narrative, question and note excerpt blocks.
inline std::string normalize_block(std::string_view s) {
    std::vector<std::string> lines;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            std::string_view line = s.substr(start, i - start);
            lines.push_back(normalize_inline(line));
            start = i + 1;
        }
    }
    // Drop leading/trailing empty lines, keep interior blank lines.
    size_t b = 0, e = lines.size();
    while (b < e && lines[b].empty()) ++b;
    while (e > b && lines[e - 1].empty()) --e;
    std::string out;
    for (size_t i = b; i < e; ++i) {
        if (i > b) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Shared metric tokenizer: lowercase, ASCII punctuation acts as a separator
// and is dropped, digits and letters kept. Bytes >= 0x80 are kept verbatim so
// multi-byte characters stay inside their token.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        bool word_char = uc >= 0x80 || std::isalnum(uc);
        if (word_char) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Removes every |...| span. Citation groups never nest; an unpaired bar is
// left in place.
inline std::string strip_citation_spans(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '|') {
            size_t close = s.find('|', i + 1);
            if (close != std::string_view::npos) {
                i = close + 1;
                continue;
            }
        }
        out.push_back(s[i]);
        ++i;
    }
    return out;
}

inline std::vector<std::string> whitespace_tokens(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : s) {
        if (is_space(c)) {
            if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace noteqa::text
