#include "cet/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cet {

CetWeights make_weights(double w0, std::size_t k) {
  if (w0 < 0.0 || w0 > 1.0) {
    throw std::invalid_argument("make_weights: w0 must be in [0,1]");
  }
  CetWeights w;
  w.w0 = w0;
  w.k = k;
  if (k == 0) {
    w.weights = {1.0};
  } else {
    w.weights.assign(k + 1, (1.0 - w0) / static_cast<double>(k));
    w.weights[0] = w0;
  }
  return w;
}

Distribution joint_prediction(std::span<const Distribution> dists,
                              const CetWeights& weights) {
  if (dists.size() != weights.weights.size()) {
    throw std::invalid_argument(
        "joint_prediction: expected " + std::to_string(weights.weights.size()) +
        " distributions, got " + std::to_string(dists.size()));
  }
  const std::size_t n = dists[0].probs.size();
  Distribution out;
  out.probs.assign(n, 0.0);
  for (std::size_t m = 0; m < dists.size(); ++m) {
    if (dists[m].probs.size() != n) {
      throw std::invalid_argument(
          "joint_prediction: member distributions have mismatched sizes");
    }
    const double wm = weights.weights[m];
    for (std::size_t j = 0; j < n; ++j) out.probs[j] += wm * dists[m].probs[j];
  }
  return out;
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "mixture-log") return LossMode::MixtureLog;
  if (name == "weighted-log") return LossMode::WeightedLog;
  throw std::invalid_argument("unknown loss mode: " + name);
}

std::string loss_mode_name(LossMode mode) {
  return mode == LossMode::MixtureLog ? "mixture-log" : "weighted-log";
}

CetLossResult cet_loss(std::span<const Distribution> dists,
                       const CetWeights& weights, int gold_index,
                       LossMode mode) {
  if (dists.size() != weights.weights.size()) {
    throw std::invalid_argument("cet_loss: weights/distributions mismatch");
  }
  const std::size_t n_opts = dists[0].probs.size();
  if (gold_index < 0 || gold_index >= static_cast<int>(n_opts)) {
    throw std::invalid_argument("cet_loss: gold_index out of range");
  }

  CetLossResult res;
  res.dprobs.resize(dists.size());
  for (std::size_t m = 0; m < dists.size(); ++m) {
    res.dprobs[m].assign(n_opts, 0.0);
  }

  if (mode == LossMode::MixtureLog) {
    double joint = 0.0;
    for (std::size_t m = 0; m < dists.size(); ++m) {
      joint += weights.weights[m] * dists[m].probs[gold_index];
    }
    if (!(joint > 0.0)) {
      throw std::runtime_error("cet_loss: joint gold probability <= 0");
    }
    res.loss = -std::log(joint);
    for (std::size_t m = 0; m < dists.size(); ++m) {
      res.dprobs[m][gold_index] = -weights.weights[m] / joint;
    }
  } else {
    double loss = 0.0;
    for (std::size_t m = 0; m < dists.size(); ++m) {
      const double pm = dists[m].probs[gold_index];
      if (!(pm > 0.0)) {
        throw std::runtime_error("cet_loss: member gold probability <= 0");
      }
      loss += -weights.weights[m] * std::log(pm);
      res.dprobs[m][gold_index] = -weights.weights[m] / pm;
    }
    res.loss = loss;
  }
  return res;
}

std::vector<GroupExample> make_group_batch(
    const QaDataset& ds, std::span<const NeighborGroup> groups) {
  std::unordered_map<std::int64_t, std::size_t> by_id;
  by_id.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    by_id[ds.samples[i].id] = i;
  }
  std::vector<GroupExample> out;
  out.reserve(groups.size());
  for (const NeighborGroup& g : groups) {
    auto it = by_id.find(g.anchor_id);
    if (it == by_id.end()) {
      throw std::runtime_error("make_group_batch: anchor id " +
                               std::to_string(g.anchor_id) +
                               " not in dataset");
    }
    const QaSample& anchor = ds.samples[it->second];
    GroupExample ex;
    ex.question = anchor.question;
    ex.options = anchor.options;
    ex.gold_index = anchor.gold_index;
    for (std::int64_t nid : g.neighbor_ids) {
      auto nit = by_id.find(nid);
      if (nit == by_id.end()) {
        throw std::runtime_error("make_group_batch: neighbor id " +
                                 std::to_string(nid) + " not in dataset");
      }
      // Recombination: neighbor question answered against anchor options.
      ex.neighbor_questions.push_back(ds.samples[nit->second].question);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

BatchResult batch_objective(std::span<const GroupExample> batch,
                            const ScorerParams& params, double w0,
                            LossMode mode) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_objective: empty batch");
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  BatchResult res;
  res.grads = ParamGrads::zeros_like(params);
  double loss_total = 0.0;

  std::vector<Distribution> dists;
  for (const GroupExample& ex : batch) {
    dists.clear();
    dists.push_back(predict(params, ex.question, ex.options));
    for (const std::string& nq : ex.neighbor_questions) {
      dists.push_back(predict(params, nq, ex.options));
    }
    const CetWeights weights = make_weights(w0, ex.k());
    CetLossResult gl = cet_loss(dists, weights, ex.gold_index, mode);
    loss_total += gl.loss;

    BackwardItem item;
    item.options = &ex.options;
    for (std::size_t m = 0; m < gl.dprobs.size(); ++m) {
      for (double& u : gl.dprobs[m]) u *= inv_b;
      item.question = m == 0 ? &ex.question : &ex.neighbor_questions[m - 1];
      item.upstream = std::move(gl.dprobs[m]);
      backward_into(params, item, res.grads);
    }
  }
  res.loss = loss_total * inv_b;
  return res;
}

long double batch_objective_loss_ld(std::span<const GroupExample> batch,
                                    const ScorerParams& params, double w0,
                                    LossMode mode) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_objective_loss_ld: empty batch");
  }
  long double total = 0.0L;
  for (const GroupExample& ex : batch) {
    const CetWeights weights = make_weights(w0, ex.k());
    std::vector<long double> gold_probs;
    gold_probs.push_back(
        gold_probability_ld(params, ex.question, ex.options, ex.gold_index));
    for (const std::string& nq : ex.neighbor_questions) {
      gold_probs.push_back(
          gold_probability_ld(params, nq, ex.options, ex.gold_index));
    }
    if (mode == LossMode::MixtureLog) {
      long double joint = 0.0L;
      for (std::size_t m = 0; m < gold_probs.size(); ++m) {
        joint += static_cast<long double>(weights.weights[m]) * gold_probs[m];
      }
      total += -std::log(joint);
    } else {
      for (std::size_t m = 0; m < gold_probs.size(); ++m) {
        total += -static_cast<long double>(weights.weights[m]) *
                 std::log(gold_probs[m]);
      }
    }
  }
  return total / static_cast<long double>(batch.size());
}

}  // namespace cet
