#pragma once

#include <span>
#include <string>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"

namespace cet {

// Group weight vector: anchor gets w0, each of the k neighbors gets
// (1-w0)/k. With k=0 the vector collapses to [1] and the group's loss is the
// plain anchor cross-entropy.
struct CetWeights {
  double w0 = 1.0;
  std::size_t k = 0;
  std::vector<double> weights;  // length k+1, sums to 1
};

CetWeights make_weights(double w0, std::size_t k);

// Elementwise convex combination of the member distributions (anchor first).
Distribution joint_prediction(std::span<const Distribution> dists,
                              const CetWeights& weights);

enum class LossMode {
  MixtureLog,   // -ln(sum_m w_m p_m[gold])   (default)
  WeightedLog,  // -sum_m w_m ln(p_m[gold])
};

LossMode parse_loss_mode(const std::string& name);
std::string loss_mode_name(LossMode mode);

struct CetLossResult {
  double loss = 0.0;
  // dLoss/dprobs for each member distribution (anchor first); only the gold
  // coordinate is nonzero.
  std::vector<std::vector<double>> dprobs;
};

CetLossResult cet_loss(std::span<const Distribution> dists,
                       const CetWeights& weights, int gold_index,
                       LossMode mode);

// One training group: the anchor's input plus its neighbors' questions
// recombined with the anchor's options (all members share options/gold).
struct GroupExample {
  std::string question;
  std::vector<std::string> options;
  int gold_index = 0;
  std::vector<std::string> neighbor_questions;

  std::size_t k() const { return neighbor_questions.size(); }
};

// Pairs dataset samples with their precomputed neighbor groups, in dataset
// order. Neighbor ids must resolve within `ds`.
std::vector<GroupExample> make_group_batch(const QaDataset& ds,
                                           std::span<const NeighborGroup> groups);

struct BatchResult {
  double loss = 0.0;  // mean over groups
  ParamGrads grads;
};

// Objective over one batch: colliding-effect loss for groups with neighbors,
// anchor cross-entropy for the rest, mean-reduced.
BatchResult batch_objective(std::span<const GroupExample> batch,
                            const ScorerParams& params, double w0,
                            LossMode mode);

// Same loss evaluated end-to-end in long double (finite-difference target).
long double batch_objective_loss_ld(std::span<const GroupExample> batch,
                                    const ScorerParams& params, double w0,
                                    LossMode mode);

}  // namespace cet
