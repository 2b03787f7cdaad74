#include "comptag/text.hpp"

#include "comptag/error.hpp"

namespace comptag::text {

namespace {

// Base letters for U+0100..U+017F. '*' marks letters without a base form
// (ligatures), which only lowercase (even code point -> odd).
constexpr std::string_view kLatinExtA =
    "aaaaaa" "cccccccc" "dddd" "eeeeeeeeee" "gggggggg" "hhhh" "iiiiiiiiii" "**"
    "jj" "kkk" "llllllllll" "nnnnnn" "n" "nn" "oooooo" "**" "rrrrrr" "ssssssss"
    "tttttt" "uuuuuuuuuuuu" "ww" "yyy" "zzzzzz" "s";
static_assert(kLatinExtA.size() == 0x80);

char32_t fold_latin1(char32_t c) noexcept {
  if (c >= 0xC0 && c <= 0xC5) return U'a';
  if (c >= 0xE0 && c <= 0xE5) return U'a';
  if (c == 0xC7 || c == 0xE7) return U'c';
  if ((c >= 0xC8 && c <= 0xCB) || (c >= 0xE8 && c <= 0xEB)) return U'e';
  if ((c >= 0xCC && c <= 0xCF) || (c >= 0xEC && c <= 0xEF)) return U'i';
  if (c == 0xD0 || c == 0xF0) return U'd';
  if (c == 0xD1 || c == 0xF1) return U'n';
  if ((c >= 0xD2 && c <= 0xD6) || (c >= 0xF2 && c <= 0xF6) || c == 0xD8 || c == 0xF8) return U'o';
  if ((c >= 0xD9 && c <= 0xDC) || (c >= 0xF9 && c <= 0xFC)) return U'u';
  if (c == 0xDD || c == 0xFD || c == 0xFF) return U'y';
  if (c == 0xC6) return 0xE6;
  if (c == 0xDE) return 0xFE;
  return c;
}

bool is_combining(char32_t c) noexcept { return c >= 0x300 && c <= 0x36F; }

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  auto bad = [&](std::size_t at) {
    throw Error(ErrorCode::MalformedRecord,
                "invalid UTF-8 sequence at byte " + std::to_string(at));
  };
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      bad(i);
    }
    if (i + len > s.size()) bad(i);
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) bad(i + k);
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms and anything outside the scalar range.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      bad(i);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::size_t char_length(std::string_view utf8) {
  std::size_t n = 0;
  for (char ch : utf8) {
    if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string substr_chars(std::string_view utf8, std::size_t start, std::size_t end) {
  const auto wide = decode_utf8(utf8);
  if (start > end || end > wide.size()) {
    throw Error(ErrorCode::InvalidArgument, "character range out of bounds");
  }
  return encode_utf8(std::u32string_view(wide).substr(start, end - start));
}

bool is_space(char32_t c) noexcept {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

char32_t fold_char(char32_t c) noexcept {
  if (c < 0x80) {
    return (c >= U'A' && c <= U'Z') ? c + 0x20 : c;
  }
  if (c >= 0xC0 && c <= 0xFF) return fold_latin1(c);
  if (c >= 0x100 && c <= 0x17F) {
    const char base = kLatinExtA[c - 0x100];
    if (base == '*') return (c % 2 == 0) ? c + 1 : c;
    return static_cast<char32_t>(base);
  }
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

std::u32string fold(std::u32string_view text) {
  std::u32string out(text);
  for (auto& c : out) c = fold_char(c);
  return out;
}

bool is_word_char(char32_t c) noexcept {
  if (c < 0x80) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9');
  }
  if (c < 0xC0 || c == 0xD7 || c == 0xF7) return false;
  if (is_space(c) || is_combining(c)) return false;
  if (c >= 0x2000 && c <= 0x2BFF) return false;  // punctuation, symbols, arrows
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c >= 0xFE30 && c <= 0xFE6F) return false;
  if (c >= 0xFF00 && c <= 0xFF0F) return false;
  return true;
}

std::vector<TokenSpan> token_spans(std::u32string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    spans.push_back({start, i});
  }
  return spans;
}

std::size_t count_tokens(std::u32string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char32_t c : text) {
    const bool ws = is_space(c);
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

std::vector<std::string> analyze(std::string_view utf8) {
  std::vector<std::string> tokens;
  std::u32string current;
  auto flush = [&] {
    if (current.size() >= 2) tokens.push_back(encode_utf8(current));
    current.clear();
  };
  for (char32_t c : decode_utf8(utf8)) {
    if (is_combining(c)) continue;
    const char32_t f = fold_char(c);
    if (is_word_char(f)) {
      current.push_back(f);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string squash_whitespace(std::string_view utf8) {
  const auto wide = decode_utf8(utf8);
  std::u32string out;
  for (const auto& span : token_spans(wide)) {
    if (!out.empty()) out.push_back(U' ');
    out.append(wide.substr(span.start, span.end - span.start));
  }
  return encode_utf8(out);
}

}  // namespace comptag::text
