#include "cet/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>

namespace cet {

VectorTable load_vector_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vector_table: cannot open " + path);
  VectorTable table;
  std::string line;
  int lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> vec;
    double x;
    while (ls >> x) vec.push_back(x);
    if (vec.empty()) {
      throw std::runtime_error("load_vector_table: " + path + ":" +
                               std::to_string(lineno) + ": no values");
    }
    if (dim == 0) {
      dim = vec.size();
    } else if (vec.size() != dim) {
      throw std::runtime_error("load_vector_table: " + path + ":" +
                               std::to_string(lineno) +
                               ": inconsistent dimension");
    }
    table[token] = std::move(vec);
  }
  if (table.empty()) {
    throw std::runtime_error("load_vector_table: " + path + ": empty table");
  }
  return table;
}

BackendKind parse_backend_kind(const std::string& name) {
  if (name == "exact") return BackendKind::Exact;
  if (name == "jaccard") return BackendKind::Jaccard;
  if (name == "embed" || name == "embedding" || name == "embedding-cosine") {
    return BackendKind::EmbeddingCosine;
  }
  throw std::invalid_argument("unknown similarity backend: " + name);
}

std::string backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Exact: return "exact";
    case BackendKind::Jaccard: return "jaccard";
    case BackendKind::EmbeddingCosine: return "embed";
  }
  return "?";
}

SimilarityBackend SimilarityBackend::embedding(
    std::shared_ptr<const VectorTable> table) {
  if (!table || table->empty()) {
    throw std::invalid_argument(
        "embedding-cosine backend requires a vector table");
  }
  return {BackendKind::EmbeddingCosine, std::move(table)};
}

namespace {

// cosine -> [0,1]; zero-norm vectors are treated as cosine 0.
double mapped_cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double c = 0.0;
  if (na > 0.0 && nb > 0.0) c = dot / (std::sqrt(na) * std::sqrt(nb));
  c = std::clamp(c, -1.0, 1.0);
  return (c + 1.0) / 2.0;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const std::string& t : a) inter += b.count(t);
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::vector<double> answer_vector(const AnswerKey& key,
                                  const VectorTable& table) {
  std::vector<double> mean;
  std::size_t found = 0;
  for (const std::string& tok : tokenize(key.normalized)) {
    auto it = table.find(tok);
    if (it == table.end()) continue;
    if (mean.empty()) mean.assign(it->second.size(), 0.0);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += it->second[i];
    ++found;
  }
  if (found == 0) {
    throw std::runtime_error(
        "answer_vector: all tokens out of vocabulary for \"" + key.normalized +
        "\"");
  }
  const double inv = 1.0 / static_cast<double>(found);
  for (double& x : mean) x *= inv;
  return mean;
}

double answer_similarity(const AnswerKey& a, const AnswerKey& b,
                         const SimilarityBackend& backend) {
  switch (backend.kind) {
    case BackendKind::Exact:
      return a.normalized == b.normalized ? 1.0 : 0.0;
    case BackendKind::Jaccard:
      return jaccard(a.tokens, b.tokens);
    case BackendKind::EmbeddingCosine: {
      if (!backend.vectors) {
        throw std::invalid_argument(
            "embedding-cosine backend has no vector table");
      }
      std::vector<double> va = answer_vector(a, *backend.vectors);
      std::vector<double> vb = answer_vector(b, *backend.vectors);
      if (va.size() != vb.size()) {
        throw std::runtime_error("answer_similarity: vector size mismatch");
      }
      return mapped_cosine(va, vb);
    }
  }
  throw std::logic_error("answer_similarity: bad backend kind");
}

double representation_similarity(const ScorerParams& frozen, const QaSample& a,
                                 const QaSample& b) {
  std::vector<double> ra = encode(frozen, a.question);
  std::vector<double> rb = encode(frozen, b.question);
  return mapped_cosine(ra, rb);
}

}  // namespace cet
