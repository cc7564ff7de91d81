#include "cet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cet/rng.hpp"

namespace cet {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void adam_update(std::span<double> p, std::span<const double> g,
                 std::span<double> m, std::span<double> v, double lr,
                 double weight_decay, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
    v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
    p[i] -= lr * weight_decay * p[i];
  }
}

bool grads_finite(const ParamGrads& g) {
  auto ok = [](std::span<const double> xs) {
    for (double x : xs) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  return ok(g.embedding) && ok(g.hidden_w) && ok(g.hidden_b) && ok(g.out_w) &&
         std::isfinite(g.out_b);
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train: learning_rate must be > 0");
  }
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1");
  }
  if (cfg.w0 < 0.0 || cfg.w0 > 1.0) {
    throw std::invalid_argument("train: w0 must be in [0,1]");
  }
  if (cfg.K < 0) throw std::invalid_argument("train: K must be >= 0");
  if (cfg.theta < 0.0 || cfg.theta > 1.0) {
    throw std::invalid_argument("train: theta must be in [0,1]");
  }
  if (cfg.weight_decay < 0.0) {
    throw std::invalid_argument("train: weight_decay must be >= 0");
  }
  if (!(cfg.grad_clip_norm > 0.0)) {
    throw std::invalid_argument("train: grad_clip_norm must be > 0");
  }
}

OptimizerState OptimizerState::for_params(const ScorerParams& p) {
  OptimizerState st;
  st.m = ParamGrads::zeros_like(p);
  st.v = ParamGrads::zeros_like(p);
  st.step = 0;
  return st;
}

void clip_gradients(ParamGrads& grads, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  }
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) grads.scale(max_norm / norm);
}

void optimizer_step(ScorerParams& params, const ParamGrads& grads,
                    OptimizerState& state, double lr, double weight_decay) {
  if (grads.embedding.size() != params.embedding.size() ||
      grads.hidden_w.size() != params.hidden_w.size() ||
      grads.hidden_b.size() != params.hidden_b.size() ||
      grads.out_w.size() != params.out_w.size()) {
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  }
  if (!grads_finite(grads)) {
    throw std::invalid_argument("optimizer_step: non-finite gradients");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  adam_update(params.embedding, grads.embedding, state.m.embedding,
              state.v.embedding, lr, weight_decay, bc1, bc2);
  adam_update(params.hidden_w, grads.hidden_w, state.m.hidden_w,
              state.v.hidden_w, lr, weight_decay, bc1, bc2);
  adam_update(params.hidden_b, grads.hidden_b, state.m.hidden_b,
              state.v.hidden_b, lr, weight_decay, bc1, bc2);
  adam_update(params.out_w, grads.out_w, state.m.out_w, state.v.out_w, lr,
              weight_decay, bc1, bc2);
  adam_update(std::span<double>(&params.out_b, 1),
              std::span<const double>(&grads.out_b, 1),
              std::span<double>(&state.m.out_b, 1),
              std::span<double>(&state.v.out_b, 1), lr, weight_decay, bc1, bc2);
}

TrainResult train(const ScorerParams& init,
                  std::span<const NeighborGroup> groups,
                  const QaDataset& train_ds, const QaDataset& dev_ds,
                  const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (train_ds.samples.empty()) {
    throw std::runtime_error("train: empty train set");
  }
  std::vector<GroupExample> examples = make_group_batch(train_ds, groups);
  for (const GroupExample& ex : examples) {
    if (ex.k() > static_cast<std::size_t>(cfg.K)) {
      throw std::runtime_error("train: a group has more neighbors than cfg.K");
    }
  }

  ScorerParams params = init;
  OptimizerState opt = OptimizerState::for_params(params);
  Rng shuffle_rng(derive_seed(cfg.seed, kSeedShuffle));

  TrainResult res;
  res.history.selected_epoch = 0;
  double best_acc = -1.0;

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<GroupExample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;  // sum of per-group losses across the epoch
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(examples[order[i]]);
      }
      BatchResult br = batch_objective(batch, params, cfg.w0, cfg.loss_mode);
      loss_sum += br.loss * static_cast<double>(batch.size());
      clip_gradients(br.grads, cfg.grad_clip_norm);
      optimizer_step(params, br.grads, opt, cfg.learning_rate,
                     cfg.weight_decay);
    }
    res.history.train_loss.push_back(loss_sum /
                                     static_cast<double>(examples.size()));
    const double acc = evaluate(params, dev_ds);
    res.history.dev_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      res.history.selected_epoch = epoch;
      res.params = params;
    }
  }
  return res;
}

double evaluate(const ScorerParams& params, const QaDataset& ds) {
  if (ds.samples.empty()) throw std::runtime_error("evaluate: empty dataset");
  std::size_t correct = 0;
  for (const QaSample& s : ds.samples) {
    // argmax over per-option scores; first maximum wins
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = 0;
    for (std::size_t j = 0; j < s.options.size(); ++j) {
      const double sc = score(params, s.question, s.options[j]);
      if (sc > best) {
        best = sc;
        best_idx = static_cast<int>(j);
      }
    }
    if (best_idx == s.gold_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

}  // namespace cet
