#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cet/harness.hpp"
#include "cet/model.hpp"
#include "cet/objective.hpp"
#include "cet/rng.hpp"
#include "oracle_loss.hpp"

using namespace cet;

TEST_SUITE_BEGIN("objective");

TEST_CASE("make_weights follows the anchor/neighbor scheme") {
  SUBCASE("w0 0.7 with three neighbors") {
    CetWeights w = make_weights(0.7, 3);
    REQUIRE(w.weights.size() == 4);
    CHECK(w.weights[0] == 0.7);
    for (int i = 1; i <= 3; ++i) {
      CHECK(w.weights[i] == doctest::Approx(0.1).epsilon(1e-12));
    }
  }
  SUBCASE("w0 1 zeroes the neighbors") {
    CetWeights w = make_weights(1.0, 4);
    CHECK(w.weights == std::vector<double>{1.0, 0.0, 0.0, 0.0, 0.0});
  }
  SUBCASE("k 0 collapses to the anchor") {
    CHECK(make_weights(0.5, 0).weights == std::vector<double>{1.0});
  }
  SUBCASE("bounds") {
    CHECK_THROWS(make_weights(-0.1, 2));
    CHECK_THROWS(make_weights(1.1, 2));
  }
}

TEST_CASE("joint_prediction mixes member distributions") {
  std::vector<Distribution> dists{{{0.6, 0.4}}, {{0.2, 0.8}}};
  CetWeights w = make_weights(0.7, 1);
  SUBCASE("weighted sum") {
    Distribution j = joint_prediction(dists, w);
    CHECK(j.probs[0] == doctest::Approx(0.48));
    CHECK(j.probs[1] == doctest::Approx(0.52));
  }
  SUBCASE("identity with the k=0 weights") {
    std::vector<Distribution> one{{{0.6, 0.4}}};
    Distribution j = joint_prediction(one, make_weights(0.3, 0));
    CHECK(j.probs == dists[0].probs);
  }
  SUBCASE("convexity fixes identical members") {
    std::vector<Distribution> same{{{0.25, 0.75}}, {{0.25, 0.75}}};
    Distribution j = joint_prediction(same, make_weights(0.4, 1));
    CHECK(j.probs[0] == doctest::Approx(0.25));
    CHECK(j.probs[1] == doctest::Approx(0.75));
  }
  SUBCASE("length mismatch is an error") {
    CHECK_THROWS(joint_prediction(dists, make_weights(0.5, 3)));
  }
}

TEST_CASE("cet_loss on the worked example") {
  std::vector<Distribution> dists{{{0.6, 0.4}}, {{0.2, 0.8}}};
  CetWeights w = make_weights(0.7, 1);
  SUBCASE("mixture-log equals -ln(joint gold)") {
    CetLossResult r = cet_loss(dists, w, 0, LossMode::MixtureLog);
    // independent high-precision evaluation of the same quantity
    const long double expect = -std::log(0.7L * 0.6L + 0.3L * 0.2L);
    CHECK(r.loss == doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
    CHECK(r.loss == doctest::Approx(0.73397).epsilon(1e-4));
    CHECK(r.dprobs[0][0] == doctest::Approx(-0.7 / 0.48));
    CHECK(r.dprobs[1][0] == doctest::Approx(-0.3 / 0.48));
    CHECK(r.dprobs[0][1] == 0.0);
  }
  SUBCASE("weighted-log sums member log losses") {
    CetLossResult r = cet_loss(dists, w, 0, LossMode::WeightedLog);
    CHECK(r.loss ==
          doctest::Approx(-0.7 * std::log(0.6) - 0.3 * std::log(0.2)));
    CHECK(r.dprobs[1][0] == doctest::Approx(-0.3 / 0.2));
  }
  SUBCASE("k=0 weights reduce both modes to the anchor NLL") {
    std::vector<Distribution> one{{{0.6, 0.4}}};
    CetWeights w0 = make_weights(0.9, 0);
    CHECK(cet_loss(one, w0, 0, LossMode::MixtureLog).loss ==
          doctest::Approx(-std::log(0.6)));
    CHECK(cet_loss(one, w0, 0, LossMode::WeightedLog).loss ==
          doctest::Approx(-std::log(0.6)));
  }
  SUBCASE("perfect anchor with k=0 weights has zero loss") {
    std::vector<Distribution> one{{{1.0, 0.0}}};
    // gold probability exactly 1 (limit case fed directly)
    CHECK(cet_loss(one, make_weights(1.0, 0), 0, LossMode::MixtureLog).loss ==
          doctest::Approx(0.0));
  }
  SUBCASE("gold index must be valid") {
    CHECK_THROWS(cet_loss(dists, w, 2, LossMode::MixtureLog));
  }
}

TEST_CASE("mixture loss is non-increasing in any member's gold probability") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = rng.uniform_index(4);
    const std::size_t n_opts = 2 + rng.uniform_index(4);
    const int gold = static_cast<int>(rng.uniform_index(n_opts));
    CetWeights w = make_weights(rng.uniform(), k);
    std::vector<Distribution> dists(k + 1);
    for (auto& d : dists) {
      d.probs.resize(n_opts);
      double sum = 0.0;
      for (double& p : d.probs) {
        p = 0.05 + rng.uniform();
        sum += p;
      }
      for (double& p : d.probs) p /= sum;
    }
    const double base = cet_loss(dists, w, gold, LossMode::MixtureLog).loss;
    // move mass from a non-gold coordinate onto gold in one member
    const std::size_t m = rng.uniform_index(k + 1);
    int other = gold == 0 ? 1 : 0;
    const double delta = dists[m].probs[other] / 2;
    dists[m].probs[other] -= delta;
    dists[m].probs[gold] += delta;
    const double bumped = cet_loss(dists, w, gold, LossMode::MixtureLog).loss;
    CHECK(bumped <= base + 1e-12);
  }
}

TEST_CASE("batch_objective loss matches the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    ScorerParams p = init_params(128, 8, 8, rng.next_u64());
    std::vector<GroupExample> batch =
        random_group_batch(1 + rng.uniform_index(10), 5, rng.next_u64());
    for (LossMode mode : {LossMode::MixtureLog, LossMode::WeightedLog}) {
      const double w0 = rng.uniform();
      BatchResult br = batch_objective(batch, p, w0, mode);
      const double oracle = cet_oracle::batch_loss(batch, p, w0, mode);
      CHECK(std::fabs(br.loss - oracle) <= 1e-10);
    }
  }
}

TEST_CASE("all-k0 batches equal the mean anchor cross-entropy") {
  ScorerParams p = init_params(128, 8, 8, 77);
  std::vector<GroupExample> batch = random_group_batch(12, 0, 5);
  for (LossMode mode : {LossMode::MixtureLog, LossMode::WeightedLog}) {
    BatchResult br = batch_objective(batch, p, 0.3, mode);
    double expect = 0.0;
    for (const GroupExample& ex : batch) {
      Distribution d = predict(p, ex.question, ex.options);
      expect += -std::log(d.probs[ex.gold_index]);
    }
    expect /= static_cast<double>(batch.size());
    CHECK(br.loss == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("w0 = 1 reduces to the anchor objective regardless of k") {
  ScorerParams p = init_params(128, 8, 8, 31);
  std::vector<GroupExample> batch = random_group_batch(8, 5, 91);
  std::vector<GroupExample> anchors_only = batch;
  for (GroupExample& ex : anchors_only) ex.neighbor_questions.clear();
  for (LossMode mode : {LossMode::MixtureLog, LossMode::WeightedLog}) {
    BatchResult with_neighbors = batch_objective(batch, p, 1.0, mode);
    BatchResult plain = batch_objective(anchors_only, p, 1.0, mode);
    CHECK(with_neighbors.loss == plain.loss);
    // gradients agree coordinate-for-coordinate
    for (std::size_t i = 0; i < plain.grads.coord_count(); ++i) {
      CHECK(with_neighbors.grads.get_coord(i) == plain.grads.get_coord(i));
    }
  }
}

TEST_CASE("make_group_batch resolves ids and recombines questions") {
  QaDataset ds;
  ds.samples.push_back({10, "anchor question", {"gold", "other"}, 0});
  ds.samples.push_back({20, "neighbor question", {"x", "y"}, 1});
  std::vector<NeighborGroup> groups(2);
  groups[0].anchor_id = 10;
  groups[0].neighbor_ids = {20};
  groups[0].similarities = {1.0};
  groups[1].anchor_id = 20;
  auto batch = make_group_batch(ds, groups);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].question == "anchor question");
  CHECK(batch[0].options == std::vector<std::string>{"gold", "other"});
  CHECK(batch[0].neighbor_questions ==
        std::vector<std::string>{"neighbor question"});
  CHECK(batch[0].gold_index == 0);
  CHECK(batch[1].k() == 0);

  SUBCASE("unknown ids are rejected") {
    groups[1].neighbor_ids = {99};
    groups[1].similarities = {1.0};
    CHECK_THROWS(make_group_batch(ds, groups));
  }
}

TEST_SUITE_END();
