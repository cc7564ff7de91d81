#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "cet/dataset.hpp"
#include "cet/neighbors.hpp"
#include "cet/similarity.hpp"

using namespace cet;

namespace {

QaDataset tiny_ds(std::size_t n) {
  QaDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples.push_back({static_cast<std::int64_t>(i),
                          "q" + std::to_string(i),
                          {"a" + std::to_string(i), "b" + std::to_string(i)},
                          0});
  }
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("neighbors");

TEST_CASE("largest selector applies the theta floor") {
  // anchor 0 against sims 1.0, 1.0, 0.99, 0.8
  QaDataset ds = tiny_ds(5);
  std::map<std::pair<std::size_t, std::size_t>, double> sims{
      {{0, 1}, 1.0}, {{0, 2}, 1.0}, {{0, 3}, 0.99}, {{0, 4}, 0.8}};
  auto sim = [&](std::size_t i, std::size_t j) {
    auto key = std::minmax(i, j);
    auto it = sims.find({key.first, key.second});
    return it == sims.end() ? 0.0 : it->second;
  };
  auto groups = build_groups_custom(ds, sim, 5, 1.0, Selector{});
  CHECK(groups[0].k() == 2);
  CHECK(groups[0].neighbor_ids == std::vector<std::int64_t>{1, 2});
  CHECK(groups[0].similarities == std::vector<double>{1.0, 1.0});

  SUBCASE("lower theta admits more neighbors, keeps sorting") {
    auto g2 = build_groups_custom(ds, sim, 5, 0.5, Selector{});
    CHECK(g2[0].neighbor_ids == std::vector<std::int64_t>{1, 2, 3, 4});
    CHECK(std::is_sorted(g2[0].similarities.rbegin(),
                          g2[0].similarities.rend()));
  }
  SUBCASE("K truncates after sorting") {
    auto g3 = build_groups_custom(ds, sim, 1, 0.5, Selector{});
    CHECK(g3[0].neighbor_ids == std::vector<std::int64_t>{1});
  }
}

TEST_CASE("plural-normalized gold answers group under the exact backend") {
  QaDataset ds;
  ds.samples.push_back(
      {0,
       "Too many people want exotic snakes. The demand is driving what to "
       "carry them?",
       {"pet shops", "dog houses"},
       0});
  ds.samples.push_back(
      {1, "Where can a person buy a snake?", {"pet shop", "aquarium"}, 0});
  auto groups = build_groups(
      ds, NeighborMetric::gold(SimilarityBackend::exact()), 5, 1.0, Selector{});
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].neighbor_ids == std::vector<std::int64_t>{1});
  CHECK(groups[1].neighbor_ids == std::vector<std::int64_t>{0});
  CHECK(groups[0].similarities[0] == 1.0);
}

TEST_CASE("K = 0 degenerates every group") {
  QaDataset ds = tiny_ds(6);
  auto groups = build_groups(
      ds, NeighborMetric::gold(SimilarityBackend::exact()), 0, 1.0, Selector{});
  for (const auto& g : groups) CHECK(g.k() == 0);
  GroupStats st = group_stats(groups);
  CHECK(st.fraction_with_neighbors == 0.0);
}

TEST_CASE("K clamps to N-1 instead of failing") {
  QaDataset ds = tiny_ds(3);
  auto sim = [](std::size_t, std::size_t) { return 1.0; };
  auto groups = build_groups_custom(ds, sim, 10, 0.0, Selector{});
  for (const auto& g : groups) CHECK(g.k() == 2);
}

TEST_CASE("selectors: smallest and random ignore theta") {
  QaDataset ds = tiny_ds(8);
  auto sim = [](std::size_t i, std::size_t j) {
    return 1.0 / (1.0 + i + j);  // all below 0.6
  };
  SUBCASE("smallest picks the least similar") {
    auto groups =
        build_groups_custom(ds, sim, 2, 1.0, {SelectorKind::Smallest, 0});
    // for anchor 0, least similar are the largest j: ids 6,7
    std::vector<std::int64_t> ids = groups[0].neighbor_ids;
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::int64_t>{6, 7});
    CHECK(std::is_sorted(groups[0].similarities.rbegin(),
                         groups[0].similarities.rend()));
  }
  SUBCASE("random is seed-deterministic and theta-free") {
    auto g1 = build_groups_custom(ds, sim, 3, 1.0, {SelectorKind::Random, 9});
    auto g2 = build_groups_custom(ds, sim, 3, 1.0, {SelectorKind::Random, 9});
    auto g3 = build_groups_custom(ds, sim, 3, 1.0, {SelectorKind::Random, 10});
    for (std::size_t i = 0; i < g1.size(); ++i) {
      CHECK(g1[i].neighbor_ids == g2[i].neighbor_ids);
      CHECK(g1[i].k() == 3);
    }
    bool any_diff = false;
    for (std::size_t i = 0; i < g1.size(); ++i) {
      if (g1[i].neighbor_ids != g3[i].neighbor_ids) any_diff = true;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("ties break by ascending sample id") {
  QaDataset ds = tiny_ds(6);
  auto sim = [](std::size_t, std::size_t) { return 0.7; };
  auto groups = build_groups_custom(ds, sim, 3, 0.5, Selector{});
  CHECK(groups[0].neighbor_ids == std::vector<std::int64_t>{1, 2, 3});
  CHECK(groups[5].neighbor_ids == std::vector<std::int64_t>{0, 1, 2});
}

TEST_CASE("recombine keeps anchor options and gold") {
  QaSample anchor{0,
                  "What is a fast but expensive way to send small cargo?",
                  {"airplane", "bird", "car", "boat"},
                  0};
  QaSample neighbor{1,
                    "Where could you find a seat that sometimes vibrates?",
                    {"airplane", "seat"},
                    0};
  NeighborInput in = recombine(anchor, neighbor);
  CHECK(in.question == neighbor.question);
  CHECK(in.options == anchor.options);
  CHECK(in.gold_index == anchor.gold_index);

  SUBCASE("self recombination is the identity input") {
    NeighborInput self = recombine(anchor, anchor);
    CHECK(self.question == anchor.question);
    CHECK(self.options == anchor.options);
  }
  SUBCASE("neighbor gold may be absent from anchor options") {
    QaSample other{2, "another question", {"parrot", "cage"}, 0};
    NeighborInput mixed = recombine(anchor, other);
    CHECK(mixed.options == anchor.options);  // "parrot" not required
  }
}

TEST_CASE("group_stats summarises the table-4 shaped fixture") {
  // one anchor plus five neighbors sharing close gold answers, K = 5
  QaDataset ds;
  ds.samples.push_back({0, "demand is driving what to carry them?",
                        {"pet shops", "zoos"}, 0});
  ds.samples.push_back({1, "Where can a person buy a snake?",
                        {"pet shops", "forests"}, 0});
  ds.samples.push_back({2, "Where might a blowfish be kept?",
                        {"pet shop", "oceans"}, 0});
  ds.samples.push_back({3, "Where can you take home a hermit crab?",
                        {"pet shop", "beaches"}, 0});
  ds.samples.push_back({4, "Where would you get a dog if you do not have one?",
                        {"pet store", "kennels"}, 0});
  ds.samples.push_back({5, "Where might he avoid going?",
                        {"pet store", "parks"}, 0});
  // jaccard admits the shop/store variants below the exact threshold
  auto groups = build_groups(
      ds, NeighborMetric::gold(SimilarityBackend::jaccard()), 5, 0.3,
      Selector{});
  CHECK(groups[0].k() == 5);
  GroupStats st = group_stats(groups);
  REQUIRE(st.k_histogram.size() == 6);
  CHECK(st.k_histogram[5] == 6);
  CHECK(st.fraction_with_neighbors == 1.0);
  CHECK(st.mean_similarity > 0.3);
}

TEST_CASE("groups serialize one record per anchor and reload") {
  QaDataset ds = tiny_ds(4);
  auto sim = [](std::size_t i, std::size_t j) {
    return (i + j) % 2 == 0 ? 0.9 : 0.4;
  };
  auto groups = build_groups_custom(ds, sim, 2, 0.3, Selector{});
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cet_groups_test";
  fs::create_directories(dir);
  const std::string path = (dir / "g.jsonl").string();
  save_groups_jsonl(groups, path);
  {
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == groups.size());
  }
  auto back = load_groups_jsonl(path);
  REQUIRE(back.size() == groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(back[i].anchor_id == groups[i].anchor_id);
    CHECK(back[i].neighbor_ids == groups[i].neighbor_ids);
    CHECK(back[i].similarities == groups[i].similarities);
  }
  fs::remove_all(dir);
}

TEST_CASE("representation metric builds valid groups") {
  QaDataset ds = tiny_ds(10);
  ScorerParams frozen = init_params(64, 4, 4, 77);
  auto groups = build_groups(ds, NeighborMetric::representation(frozen), 3,
                             0.0, Selector{});
  REQUIRE(groups.size() == 10);
  for (const auto& g : groups) {
    CHECK(g.k() == 3);
    for (std::size_t i = 0; i < g.k(); ++i) {
      CHECK(g.neighbor_ids[i] != g.anchor_id);
      CHECK(g.similarities[i] >= 0.0);
      CHECK(g.similarities[i] <= 1.0);
    }
  }
}

TEST_SUITE_END();
