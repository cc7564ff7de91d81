#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/text.hpp"

namespace cet {

using VectorTable = std::unordered_map<std::string, std::vector<double>>;

// One token per line: token then whitespace-separated decimals.
VectorTable load_vector_table(const std::string& path);

enum class BackendKind { Exact, Jaccard, EmbeddingCosine };

BackendKind parse_backend_kind(const std::string& name);
std::string backend_kind_name(BackendKind kind);

struct SimilarityBackend {
  BackendKind kind = BackendKind::Exact;
  std::shared_ptr<const VectorTable> vectors;  // EmbeddingCosine only

  static SimilarityBackend exact() { return {BackendKind::Exact, nullptr}; }
  static SimilarityBackend jaccard() { return {BackendKind::Jaccard, nullptr}; }
  static SimilarityBackend embedding(std::shared_ptr<const VectorTable> table);
};

// exact: 1.0 iff normalized texts are equal.
// jaccard: |tokens intersect| / |tokens union|.
// embedding-cosine: cosine of mean token vectors, mapped to [0,1] via (c+1)/2;
// out-of-vocabulary tokens are skipped, all-OOV is an error.
double answer_similarity(const AnswerKey& a, const AnswerKey& b,
                         const SimilarityBackend& backend);

// Mean vector of the key's in-vocabulary tokens (split of `normalized`).
std::vector<double> answer_vector(const AnswerKey& key,
                                  const VectorTable& table);

// Cosine of the frozen model's mean-pooled question encodings, mapped to
// [0,1]. `frozen` is the pre-fine-tuning checkpoint (H_0 semantics).
double representation_similarity(const ScorerParams& frozen, const QaSample& a,
                                 const QaSample& b);

}  // namespace cet
