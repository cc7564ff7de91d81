#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cet {

// Hashed bag-of-embeddings question/option scorer:
//   u = [encode(question); encode(option)]         (2d)
//   s = out_w . tanh(hidden_w^T u + hidden_b) + out_b
// encode() mean-pools embedding rows selected by a seeded 64-bit
// FNV-1a token hash modulo vocab_buckets.
struct ScorerParams {
  std::size_t vocab_buckets = 0;  // V
  std::size_t embed_dim = 0;      // d
  std::size_t hidden_dim = 0;     // h
  std::uint64_t hash_seed = 0;

  std::vector<double> embedding;  // V x d, row-major
  std::vector<double> hidden_w;   // 2d x h, row-major [i*h + j]
  std::vector<double> hidden_b;   // h
  std::vector<double> out_w;      // h
  double out_b = 0.0;

  std::size_t coord_count() const;
  double get_coord(std::size_t i) const;
  void set_coord(std::size_t i, double v);
};

// Fresh parameters: weights uniform in [-0.1, 0.1] from `seed`, biases zero.
ScorerParams init_params(std::size_t vocab_buckets, std::size_t embed_dim,
                         std::size_t hidden_dim, std::uint64_t seed);

// Dimension/finiteness sanity check; throws on violation.
void validate_params(const ScorerParams& p);

struct Distribution {
  std::vector<double> probs;  // one per option, each in (0,1), sums to 1
};

struct ParamGrads {
  std::vector<double> embedding;
  std::vector<double> hidden_w;
  std::vector<double> hidden_b;
  std::vector<double> out_w;
  double out_b = 0.0;

  static ParamGrads zeros_like(const ScorerParams& p);
  void add_scaled(const ParamGrads& other, double scale);
  double squared_norm() const;
  void scale(double s);

  std::size_t coord_count() const;
  double get_coord(std::size_t i) const;
};

std::uint64_t hash_token(std::uint64_t hash_seed, std::string_view token);
std::size_t token_bucket(const ScorerParams& p, std::string_view token);

// Mean of the embedding rows selected by the text's tokens.
std::vector<double> encode(const ScorerParams& p, std::string_view text);

double score(const ScorerParams& p, std::string_view question,
             std::string_view option);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> scores);

Distribution predict(const ScorerParams& p, std::string_view question,
                     std::span<const std::string> options);

// Gold-option probability with the whole forward pass evaluated in
// long double; the reference path for finite-difference checking.
long double gold_probability_ld(const ScorerParams& p,
                                std::string_view question,
                                std::span<const std::string> options,
                                int gold_index);

// One backward work item: an input plus dLoss/dprobs.
struct BackwardItem {
  const std::string* question = nullptr;
  const std::vector<std::string>* options = nullptr;
  std::vector<double> upstream;  // same length as options
};

// Exact analytic gradient of softmax(per-option scores) composed with the
// upstream gradients, summed over the batch.
ParamGrads backward(const ScorerParams& p, std::span<const BackwardItem> batch);
void backward_into(const ScorerParams& p, const BackwardItem& item,
                   ParamGrads& grads);

// Central finite differences against analytic gradients on n_coords
// uniformly sampled coordinates. Returns the max relative error
// |a-g| / max(|a|,|g|,1e-8). The loss is evaluated in long double so
// the difference quotient is not drowned by roundoff at h = 1e-4.
double finite_diff_check(
    const ScorerParams& params,
    const std::function<long double(const ScorerParams&)>& loss_fn,
    const ParamGrads& analytic, std::size_t n_coords, double h,
    std::uint64_t seed);

// Binary checkpoint: magic "CETCKPT1", little-endian u64 {V, d, h, hash_seed},
// then f64 arrays in declared order (embedding, hidden_w, hidden_b, out_w,
// out_b).
void save_checkpoint(const ScorerParams& p, const std::string& path);
ScorerParams load_checkpoint(const std::string& path);

}  // namespace cet
