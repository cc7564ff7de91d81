#include "cet/text.hpp"

#include <cctype>
#include <stdexcept>

namespace cet {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

std::string strip_plural(std::string token) {
  if (token.size() >= 4 && token.back() == 's' &&
      token[token.size() - 2] != 's') {
    token.pop_back();
  }
  return token;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (is_space(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t count_tokens(std::string_view text) {
  return tokenize(text).size();
}

AnswerKey normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    unsigned char uc = static_cast<unsigned char>(ch);
    if (is_punct(uc)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(uc)));
  }

  AnswerKey key;
  for (std::string& tok : tokenize(cleaned)) {
    std::string t = strip_plural(std::move(tok));
    if (!key.normalized.empty()) key.normalized.push_back(' ');
    key.normalized += t;
    key.tokens.insert(std::move(t));
  }
  if (key.normalized.empty()) {
    throw std::runtime_error("normalize_answer: \"" + std::string(text) +
                             "\" is empty after normalization");
  }
  return key;
}

}  // namespace cet
