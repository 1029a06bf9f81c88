#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "warren/types.hpp"

namespace warren {

// JSON structural markers stored as Unicode noncharacters so the content
// can distinguish, e.g., a ':' separating a key-value pair from a ':'
// inside a string. NumberMark brackets a numeric leaf; it renders as
// nothing on translation.
enum class StructuralKind {
  kObjectOpen,
  kObjectClose,
  kArrayOpen,
  kArrayClose,
  kQuote,
  kColon,
  kComma,
  kNumberMark,
};

// Code point of the noncharacter assigned to a structural kind
// (U+FDD0..U+FDD7).
char32_t structural_code_point(StructuralKind kind);

// The UTF-8 encoding of the structural marker, suitable for embedding in
// appended text.
const std::string& structural_text(StructuralKind kind);

// Source character a structural marker renders back to ("{", "\"", ...;
// empty for the number mark).
std::string_view structural_render(StructuralKind kind);

// Returns true (and the kind) when the code point is one of the reserved
// structural noncharacters.
bool structural_kind_of(char32_t cp, StructuralKind* kind);

struct Token {
  std::string text;    // lowercase-folded word, or the structural marker
  size_t offset;       // byte offset of the token in the source
  size_t length;       // byte length of the token in the source
  bool structural;     // true for structural noncharacter tokens
};

// One-address structural token, deterministic per kind.
Token structural_token(StructuralKind kind);

// Word-level tokenization: maximal runs of letters and digits form words
// (folded to lowercase for feature derivation); structural noncharacters
// are single tokens; everything else is skipped for addressing.
// Throws ParseError on invalid UTF-8.
std::vector<Token> tokenize(std::string_view text);

// |tokenize(text)| without materializing the tokens.
size_t count_tokens(std::string_view text);

}  // namespace warren
