#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/similarity.hpp"

namespace cet {

// Up-to-K neighbor ids for one anchor, sorted by non-increasing similarity
// (ties by ascending sample id). The anchor never lists itself.
struct NeighborGroup {
  std::int64_t anchor_id = 0;
  std::vector<std::int64_t> neighbor_ids;
  std::vector<double> similarities;

  std::size_t k() const { return neighbor_ids.size(); }
};

// A neighbor's question recombined with the anchor's options and gold index.
struct NeighborInput {
  std::string question;
  std::vector<std::string> options;
  int gold_index = 0;
};

enum class SelectorKind { Largest, Smallest, Random };

struct Selector {
  SelectorKind kind = SelectorKind::Largest;
  std::uint64_t seed = 0;  // used by Random only
};

SelectorKind parse_selector_kind(const std::string& name);
std::string selector_kind_name(SelectorKind kind);

// Which similarity drives the neighbor search.
struct NeighborMetric {
  enum class Kind { GoldAnswer, Representation } kind = Kind::GoldAnswer;
  SimilarityBackend backend;            // GoldAnswer
  const ScorerParams* frozen = nullptr;  // Representation

  static NeighborMetric gold(SimilarityBackend b) {
    NeighborMetric m;
    m.kind = Kind::GoldAnswer;
    m.backend = std::move(b);
    return m;
  }
  static NeighborMetric representation(const ScorerParams& frozen_params) {
    NeighborMetric m;
    m.kind = Kind::Representation;
    m.frozen = &frozen_params;
    return m;
  }
};

// One group per sample, dataset order. Largest keeps only candidates with
// similarity >= theta; Smallest and Random ignore theta on purpose (they
// exist to supply deliberately poor neighbors). K is clamped to N-1.
std::vector<NeighborGroup> build_groups(const QaDataset& ds,
                                        const NeighborMetric& metric, int K,
                                        double theta, Selector selector);

// Same selection logic over an arbitrary pairwise similarity (by sample
// index), used by tests and custom metrics.
using IndexSimFn = std::function<double(std::size_t, std::size_t)>;
std::vector<NeighborGroup> build_groups_custom(const QaDataset& ds,
                                               const IndexSimFn& sim, int K,
                                               double theta, Selector selector);

NeighborInput recombine(const QaSample& anchor, const QaSample& neighbor);

struct GroupStats {
  std::vector<std::size_t> k_histogram;  // index = k, up to max observed k
  double fraction_with_neighbors = 0.0;
  double mean_similarity = 0.0;  // over all selected neighbor slots
};

GroupStats group_stats(std::span<const NeighborGroup> groups);

// One JSON record per anchor.
void save_groups_jsonl(std::span<const NeighborGroup> groups,
                       const std::string& path);
std::vector<NeighborGroup> load_groups_jsonl(const std::string& path);

}  // namespace cet
