#include "warren/tokenizer.hpp"

#include <array>
#include <cctype>

namespace warren {

namespace {

constexpr char32_t kStructuralBase = 0xFDD0;
constexpr int kStructuralCount = 8;

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

// Decodes one code point at `i`, advancing `i`. Throws on malformed input.
char32_t decode_utf8(std::string_view s, size_t& i) {
  auto bad = [&] { throw ParseError("malformed UTF-8 input"); };
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    ++i;
    return c;
  }
  int extra;
  char32_t cp;
  if ((c & 0xE0) == 0xC0) {
    extra = 1;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    extra = 2;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    extra = 3;
    cp = c & 0x07;
  } else {
    bad();
    return 0;
  }
  if (i + 1 + extra > s.size()) bad();
  ++i;
  for (int j = 0; j < extra; ++j, ++i) {
    unsigned char cc = static_cast<unsigned char>(s[i]);
    if ((cc & 0xC0) != 0x80) bad();
    cp = (cp << 6) | (cc & 0x3F);
  }
  return cp;
}

bool is_word_cp(char32_t cp) {
  if (cp < 0x80)
    return std::isalnum(static_cast<unsigned char>(static_cast<char>(cp)));
  StructuralKind kind;
  if (structural_kind_of(cp, &kind)) return false;
  // Treat remaining non-ASCII code points as word constituents.
  return true;
}

char32_t fold_cp(char32_t cp) {
  if (cp < 0x80)
    return static_cast<char32_t>(
        std::tolower(static_cast<unsigned char>(static_cast<char>(cp))));
  return cp;
}

template <typename Visit>
void scan(std::string_view text, Visit&& visit) {
  size_t i = 0;
  std::string word;
  size_t word_start = 0;
  auto flush = [&](size_t end) {
    if (!word.empty()) {
      visit(word, word_start, end - word_start, false);
      word.clear();
    }
  };
  while (i < text.size()) {
    size_t start = i;
    char32_t cp = decode_utf8(text, i);
    StructuralKind kind;
    if (structural_kind_of(cp, &kind)) {
      flush(start);
      visit(structural_text(kind), start, i - start, true);
    } else if (is_word_cp(cp)) {
      if (word.empty()) word_start = start;
      word += encode_utf8(fold_cp(cp));
    } else {
      flush(start);
    }
  }
  flush(text.size());
}

}  // namespace

char32_t structural_code_point(StructuralKind kind) {
  return kStructuralBase + static_cast<int>(kind);
}

const std::string& structural_text(StructuralKind kind) {
  static const std::array<std::string, kStructuralCount> texts = [] {
    std::array<std::string, kStructuralCount> t;
    for (int i = 0; i < kStructuralCount; ++i)
      t[i] = encode_utf8(kStructuralBase + i);
    return t;
  }();
  return texts[static_cast<int>(kind)];
}

std::string_view structural_render(StructuralKind kind) {
  switch (kind) {
    case StructuralKind::kObjectOpen:
      return "{";
    case StructuralKind::kObjectClose:
      return "}";
    case StructuralKind::kArrayOpen:
      return "[";
    case StructuralKind::kArrayClose:
      return "]";
    case StructuralKind::kQuote:
      return "\"";
    case StructuralKind::kColon:
      return ":";
    case StructuralKind::kComma:
      return ",";
    case StructuralKind::kNumberMark:
      return "";
  }
  return "";
}

bool structural_kind_of(char32_t cp, StructuralKind* kind) {
  if (cp < kStructuralBase || cp >= kStructuralBase + kStructuralCount)
    return false;
  *kind = static_cast<StructuralKind>(cp - kStructuralBase);
  return true;
}

Token structural_token(StructuralKind kind) {
  return Token{structural_text(kind), 0, structural_text(kind).size(), true};
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  scan(text, [&](const std::string& word, size_t offset, size_t length,
                 bool structural) {
    tokens.push_back(Token{word, offset, length, structural});
  });
  return tokens;
}

size_t count_tokens(std::string_view text) {
  size_t n = 0;
  scan(text, [&](const std::string&, size_t, size_t, bool) { ++n; });
  return n;
}

}  // namespace warren
