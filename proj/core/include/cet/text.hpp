#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cet {

// Lowercased whitespace tokens, in input order, duplicates kept.
std::vector<std::string> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

// Canonical form of a gold answer used for neighbor retrieval.
struct AnswerKey {
  std::string normalized;        // lowercase, punctuation-free, single-spaced
  std::set<std::string> tokens;  // whitespace split of `normalized`
};

// lowercase -> drop punctuation -> collapse whitespace -> for each token of
// length >= 4 ending in 's' (but not 'ss'), drop the trailing 's'.
// Throws if nothing is left after normalization.
AnswerKey normalize_answer(std::string_view text);

}  // namespace cet
