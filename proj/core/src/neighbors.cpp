#include "cet/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cet/rng.hpp"

namespace cet {

using ordered_json = nlohmann::ordered_json;

SelectorKind parse_selector_kind(const std::string& name) {
  if (name == "largest") return SelectorKind::Largest;
  if (name == "smallest") return SelectorKind::Smallest;
  if (name == "random") return SelectorKind::Random;
  throw std::invalid_argument("unknown selector: " + name);
}

std::string selector_kind_name(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::Largest: return "largest";
    case SelectorKind::Smallest: return "smallest";
    case SelectorKind::Random: return "random";
  }
  return "?";
}

namespace {

struct Candidate {
  double sim;
  std::size_t index;
  std::int64_t id;
};

// Final storage order shared by all selectors: similarity descending,
// ties by ascending sample id.
bool storage_less(const Candidate& a, const Candidate& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.id < b.id;
}

bool smallest_less(const Candidate& a, const Candidate& b) {
  if (a.sim != b.sim) return a.sim < b.sim;
  return a.id < b.id;
}

}  // namespace

std::vector<NeighborGroup> build_groups_custom(const QaDataset& ds,
                                               const IndexSimFn& sim, int K,
                                               double theta,
                                               Selector selector) {
  if (K < 0) throw std::invalid_argument("build_groups: K must be >= 0");
  if (theta < 0.0 || theta > 1.0) {
    throw std::invalid_argument("build_groups: theta must be in [0,1]");
  }
  const std::size_t n = ds.samples.size();
  const std::size_t k_cap =
      std::min<std::size_t>(static_cast<std::size_t>(K), n > 0 ? n - 1 : 0);

  std::vector<NeighborGroup> groups;
  groups.reserve(n);
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < n; ++i) {
    NeighborGroup g;
    g.anchor_id = ds.samples[i].id;
    if (k_cap > 0) {
      cands.clear();
      switch (selector.kind) {
        case SelectorKind::Largest: {
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = sim(i, j);
            if (s >= theta) cands.push_back({s, j, ds.samples[j].id});
          }
          std::partial_sort(cands.begin(),
                            cands.begin() + std::min(k_cap, cands.size()),
                            cands.end(), storage_less);
          if (cands.size() > k_cap) cands.resize(k_cap);
          break;
        }
        case SelectorKind::Smallest: {
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cands.push_back({sim(i, j), j, ds.samples[j].id});
          }
          std::partial_sort(cands.begin(),
                            cands.begin() + std::min(k_cap, cands.size()),
                            cands.end(), smallest_less);
          if (cands.size() > k_cap) cands.resize(k_cap);
          std::sort(cands.begin(), cands.end(), storage_less);
          break;
        }
        case SelectorKind::Random: {
          Rng rng(derive_seed(selector.seed, kSeedSelector,
                              static_cast<std::uint64_t>(ds.samples[i].id)));
          for (std::size_t pick : rng.sample_without_replacement(n - 1, k_cap)) {
            std::size_t j = pick < i ? pick : pick + 1;  // skip the anchor
            cands.push_back({sim(i, j), j, ds.samples[j].id});
          }
          std::sort(cands.begin(), cands.end(), storage_less);
          break;
        }
      }
      for (const Candidate& c : cands) {
        g.neighbor_ids.push_back(c.id);
        g.similarities.push_back(c.sim);
      }
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<NeighborGroup> build_groups(const QaDataset& ds,
                                        const NeighborMetric& metric, int K,
                                        double theta, Selector selector) {
  const std::size_t n = ds.samples.size();
  if (metric.kind == NeighborMetric::Kind::GoldAnswer) {
    std::vector<AnswerKey> keys;
    keys.reserve(n);
    for (const QaSample& s : ds.samples) {
      keys.push_back(normalize_answer(s.gold_text()));
    }
    auto sim = [&](std::size_t i, std::size_t j) {
      return answer_similarity(keys[i], keys[j], metric.backend);
    };
    return build_groups_custom(ds, sim, K, theta, selector);
  }

  if (metric.frozen == nullptr) {
    throw std::invalid_argument(
        "build_groups: representation metric needs a frozen checkpoint");
  }
  std::vector<std::vector<double>> reps;
  reps.reserve(n);
  for (const QaSample& s : ds.samples) {
    reps.push_back(encode(*metric.frozen, s.question));
  }
  auto sim = [&](std::size_t i, std::size_t j) {
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (std::size_t t = 0; t < reps[i].size(); ++t) {
      dot += reps[i][t] * reps[j][t];
      ni += reps[i][t] * reps[i][t];
      nj += reps[j][t] * reps[j][t];
    }
    double c = 0.0;
    if (ni > 0.0 && nj > 0.0) c = dot / (std::sqrt(ni) * std::sqrt(nj));
    c = std::clamp(c, -1.0, 1.0);
    return (c + 1.0) / 2.0;
  };
  return build_groups_custom(ds, sim, K, theta, selector);
}

NeighborInput recombine(const QaSample& anchor, const QaSample& neighbor) {
  NeighborInput in;
  in.question = neighbor.question;
  in.options = anchor.options;
  in.gold_index = anchor.gold_index;
  return in;
}

GroupStats group_stats(std::span<const NeighborGroup> groups) {
  GroupStats st;
  std::size_t max_k = 0;
  for (const NeighborGroup& g : groups) max_k = std::max(max_k, g.k());
  st.k_histogram.assign(max_k + 1, 0);
  std::size_t with_neighbors = 0;
  double sim_sum = 0.0;
  std::size_t sim_count = 0;
  for (const NeighborGroup& g : groups) {
    st.k_histogram[g.k()] += 1;
    if (g.k() > 0) ++with_neighbors;
    for (double s : g.similarities) {
      sim_sum += s;
      ++sim_count;
    }
  }
  if (!groups.empty()) {
    st.fraction_with_neighbors =
        static_cast<double>(with_neighbors) / static_cast<double>(groups.size());
  }
  if (sim_count > 0) {
    st.mean_similarity = sim_sum / static_cast<double>(sim_count);
  }
  return st;
}

void save_groups_jsonl(std::span<const NeighborGroup> groups,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_groups_jsonl: cannot open " + path);
  for (const NeighborGroup& g : groups) {
    ordered_json rec;
    rec["anchor_id"] = g.anchor_id;
    rec["k"] = g.k();
    rec["neighbor_ids"] = g.neighbor_ids;
    rec["similarities"] = g.similarities;
    out << rec.dump() << '\n';
  }
  if (!out) {
    throw std::runtime_error("save_groups_jsonl: write failed for " + path);
  }
}

std::vector<NeighborGroup> load_groups_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_groups_jsonl: cannot open " + path);
  std::vector<NeighborGroup> groups;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string context = path + ":" + std::to_string(lineno);
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(context + ": malformed JSON: " + e.what());
    }
    NeighborGroup g;
    try {
      g.anchor_id = rec.at("anchor_id").get<std::int64_t>();
      g.neighbor_ids = rec.at("neighbor_ids").get<std::vector<std::int64_t>>();
      g.similarities = rec.at("similarities").get<std::vector<double>>();
    } catch (const std::exception& e) {
      throw std::runtime_error(context + ": bad record: " + e.what());
    }
    if (g.neighbor_ids.size() != g.similarities.size()) {
      throw std::runtime_error(context + ": ids/similarities length mismatch");
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace cet
