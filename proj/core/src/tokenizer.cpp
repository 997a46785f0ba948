#include "rehab/tokenizer.hpp"

#include <cctype>
#include <cstdio>

namespace rehab::text {

namespace {

bool word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80 || c == '_'; }

}  // namespace

std::vector<Token> WordTokenizer::tokenize(std::string_view text) const {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) != 0) {
      ++i;
      continue;
    }
    if (word_char(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && word_char(static_cast<unsigned char>(text[j]))) ++j;
      tokens.push_back({i, j});
      i = j;
    } else {
      tokens.push_back({i, i + 1});
      ++i;
    }
  }
  return tokens;
}

std::vector<std::string> WordTokenizer::words(std::string_view text) const {
  std::vector<std::string> out;
  for (const auto& t : tokenize(text)) out.emplace_back(text.substr(t.begin, t.end - t.begin));
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace rehab::text
