#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pis/errors.hpp"

namespace pis {

// Half-open byte range [start, end).
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool operator==(const CharSpan&) const = default;
};

enum class TokenKind { word, punctuation };

struct Token {
    std::string text;
    std::size_t index = 0;  // ordinal within the sentence
    CharSpan span;          // offsets into the sentence text
    TokenKind kind = TokenKind::word;

    bool is_word() const noexcept { return kind == TokenKind::word; }
    bool operator==(const Token&) const = default;
};

struct Sentence {
    std::size_t index = 0;
    std::string text;
    CharSpan span;  // offsets into the document text
    std::vector<Token> tokens;

    std::size_t word_count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : tokens) n += t.is_word() ? 1 : 0;
        return n;
    }
    bool operator==(const Sentence&) const = default;
};

struct Document {
    std::string id;
    std::string text;
    std::vector<Sentence> sentences;
};

namespace detail {

inline bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_terminal(unsigned char c) { return c == '.' || c == '!' || c == '?' || c == ';'; }

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences and are treated as letters.
inline bool is_word_char(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace detail

inline std::string case_fold(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

// Number of UTF-8 code points.
inline std::size_t char_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
}

// Word tokens are maximal runs of letters/digits joined by internal
// apostrophes ("I'm", "let's"); every other non-space byte is a one-character
// punctuation token.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    const std::size_t n = text.size();
    std::size_t i = 0;
    auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    while (i < n) {
        const unsigned char c = at(i);
        if (detail::is_space(c)) {
            ++i;
            continue;
        }
        Token tok;
        tok.index = tokens.size();
        if (detail::is_word_char(c)) {
            std::size_t j = i + 1;
            while (j < n) {
                if (detail::is_word_char(at(j))) {
                    ++j;
                } else if (at(j) == '\'' && j + 1 < n && detail::is_word_char(at(j + 1))) {
                    j += 2;
                } else {
                    break;
                }
            }
            tok.kind = TokenKind::word;
            tok.span = {i, j};
            i = j;
        } else {
            tok.kind = TokenKind::punctuation;
            tok.span = {i, i + 1};
            ++i;
        }
        tok.text = std::string(text.substr(tok.span.start, tok.span.size()));
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

inline std::vector<Token> tokenize(const Sentence& sentence) { return tokenize(sentence.text); }

// Sentences end at '.', '!', '?', ';' or a newline; the delimiter (and any
// directly following run of . ! ? ;) stays with its sentence. Surrounding
// whitespace is excluded from the span, whitespace-only segments are dropped.
inline std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    const std::size_t n = text.size();
    auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };

    auto emit = [&](std::size_t begin, std::size_t end) {
        while (begin < end && detail::is_space(at(begin))) ++begin;
        while (end > begin && detail::is_space(at(end - 1))) --end;
        if (begin == end) return;
        Sentence s;
        s.index = out.size();
        s.span = {begin, end};
        s.text = std::string(text.substr(begin, end - begin));
        s.tokens = tokenize(s.text);
        out.push_back(std::move(s));
    };

    std::size_t start = 0;
    std::size_t i = 0;
    while (i < n) {
        const unsigned char c = at(i);
        if (c == '\n') {
            emit(start, i + 1);
            start = ++i;
        } else if (detail::is_terminal(c)) {
            std::size_t j = i + 1;
            while (j < n && detail::is_terminal(at(j))) ++j;
            emit(start, j);
            start = i = j;
        } else {
            ++i;
        }
    }
    emit(start, n);
    return out;
}

inline Document make_document(std::string id, std::string text) {
    Document doc;
    doc.id = std::move(id);
    doc.text = std::move(text);
    doc.sentences = split_sentences(doc.text);
    return doc;
}

// Joins surviving tokens: one space before each word token, none before
// punctuation. `tokens` must be a subsequence (by index) of the sentence's tokens.
inline std::string detokenize(std::span<const Token> tokens, const Sentence& original) {
    std::string out;
    bool first = true;
    std::size_t next_min = 0;
    for (const auto& t : tokens) {
        if (t.index < next_min || t.index >= original.tokens.size() ||
            original.tokens[t.index].text != t.text) {
            throw SubsequenceViolation("token '" + t.text + "' at index " + std::to_string(t.index) +
                                       " is not an increasing member of the sentence");
        }
        next_min = t.index + 1;
        if (!first && t.is_word()) out.push_back(' ');
        out += t.text;
        first = false;
    }
    return out;
}

inline std::vector<Token> word_tokens(std::span<const Token> tokens) {
    std::vector<Token> out;
    for (const auto& t : tokens) {
        if (t.is_word()) out.push_back(t);
    }
    return out;
}

// Case-folded word token texts; the token stream used by the metrics.
inline std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& t : tokenize(text)) {
        if (t.is_word()) out.push_back(case_fold(t.text));
    }
    return out;
}

}  // namespace pis
