#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rehab::text {

struct Token {
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
};

/// Splits text into word and punctuation tokens. Runs of letters/digits (and
/// any non-ASCII bytes, so UTF-8 words stay whole) form one token; every
/// other non-space ASCII character is a token of its own.
class WordTokenizer {
 public:
  std::vector<Token> tokenize(std::string_view text) const;
  std::size_t count(std::string_view text) const { return tokenize(text).size(); }
  std::vector<std::string> words(std::string_view text) const;
};

/// Lower-cases ASCII letters.
std::string lowercase(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace rehab::text
