#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace comptag::text {

// All character offsets in the library are Unicode scalar-value indices.
// Strings cross module boundaries as UTF-8 and are widened to UTF-32
// wherever offsets are computed.

/// Decodes UTF-8. Throws Error(MalformedRecord) on invalid sequences.
std::u32string decode_utf8(std::string_view utf8);
std::string encode_utf8(std::u32string_view text);

/// Number of scalar values in a UTF-8 string.
std::size_t char_length(std::string_view utf8);

/// Substring by scalar-value offsets, half-open [start, end).
std::string substr_chars(std::string_view utf8, std::size_t start, std::size_t end);

bool is_space(char32_t c) noexcept;

/// Lowercases and strips diacritics from one scalar value. The mapping is
/// one-to-one so folded strings keep the offsets of the original.
char32_t fold_char(char32_t c) noexcept;
std::u32string fold(std::u32string_view text);

/// True for characters that belong to analyzer tokens (after folding).
bool is_word_char(char32_t c) noexcept;

/// Tokens are maximal runs of non-whitespace characters.
std::size_t count_tokens(std::u32string_view text);

struct TokenSpan {
  std::size_t start;
  std::size_t end;
};
std::vector<TokenSpan> token_spans(std::u32string_view text);

/// Retrieval analyzer: lowercase, fold accents, split on non-alphanumeric
/// runs, drop tokens shorter than two characters.
std::vector<std::string> analyze(std::string_view utf8);

/// Collapses whitespace runs to single spaces and trims.
std::string squash_whitespace(std::string_view utf8);

}  // namespace comptag::text
