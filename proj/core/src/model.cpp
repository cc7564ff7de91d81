#include "cet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cet/rng.hpp"
#include "cet/text.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace cet {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void check_dims(std::size_t v, std::size_t d, std::size_t h) {
  if (v < 64 || d < 4 || h < 4) {
    throw std::invalid_argument(
        "scorer dims out of range (need V >= 64, d >= 4, h >= 4)");
  }
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::size_t ScorerParams::coord_count() const {
  return embedding.size() + hidden_w.size() + hidden_b.size() + out_w.size() +
         1;
}

double ScorerParams::get_coord(std::size_t i) const {
  if (i < embedding.size()) return embedding[i];
  i -= embedding.size();
  if (i < hidden_w.size()) return hidden_w[i];
  i -= hidden_w.size();
  if (i < hidden_b.size()) return hidden_b[i];
  i -= hidden_b.size();
  if (i < out_w.size()) return out_w[i];
  i -= out_w.size();
  if (i == 0) return out_b;
  throw std::out_of_range("ScorerParams coordinate out of range");
}

void ScorerParams::set_coord(std::size_t i, double v) {
  if (i < embedding.size()) {
    embedding[i] = v;
    return;
  }
  i -= embedding.size();
  if (i < hidden_w.size()) {
    hidden_w[i] = v;
    return;
  }
  i -= hidden_w.size();
  if (i < hidden_b.size()) {
    hidden_b[i] = v;
    return;
  }
  i -= hidden_b.size();
  if (i < out_w.size()) {
    out_w[i] = v;
    return;
  }
  i -= out_w.size();
  if (i == 0) {
    out_b = v;
    return;
  }
  throw std::out_of_range("ScorerParams coordinate out of range");
}

ScorerParams init_params(std::size_t vocab_buckets, std::size_t embed_dim,
                         std::size_t hidden_dim, std::uint64_t seed) {
  check_dims(vocab_buckets, embed_dim, hidden_dim);
  ScorerParams p;
  p.vocab_buckets = vocab_buckets;
  p.embed_dim = embed_dim;
  p.hidden_dim = hidden_dim;
  p.hash_seed = derive_seed(seed, kSeedHash);
  Rng rng(derive_seed(seed, kSeedInit));
  auto fill = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& x : v) x = rng.uniform(-0.1, 0.1);
  };
  fill(p.embedding, vocab_buckets * embed_dim);
  fill(p.hidden_w, 2 * embed_dim * hidden_dim);
  p.hidden_b.assign(hidden_dim, 0.0);
  fill(p.out_w, hidden_dim);
  p.out_b = 0.0;
  return p;
}

void validate_params(const ScorerParams& p) {
  check_dims(p.vocab_buckets, p.embed_dim, p.hidden_dim);
  if (p.embedding.size() != p.vocab_buckets * p.embed_dim ||
      p.hidden_w.size() != 2 * p.embed_dim * p.hidden_dim ||
      p.hidden_b.size() != p.hidden_dim || p.out_w.size() != p.hidden_dim) {
    throw std::runtime_error("scorer parameter shapes are inconsistent");
  }
  if (!all_finite(p.embedding) || !all_finite(p.hidden_w) ||
      !all_finite(p.hidden_b) || !all_finite(p.out_w) ||
      !std::isfinite(p.out_b)) {
    throw std::runtime_error("scorer parameters contain non-finite entries");
  }
}

ParamGrads ParamGrads::zeros_like(const ScorerParams& p) {
  ParamGrads g;
  g.embedding.assign(p.embedding.size(), 0.0);
  g.hidden_w.assign(p.hidden_w.size(), 0.0);
  g.hidden_b.assign(p.hidden_b.size(), 0.0);
  g.out_w.assign(p.out_w.size(), 0.0);
  g.out_b = 0.0;
  return g;
}

void ParamGrads::add_scaled(const ParamGrads& other, double scale) {
  auto axpy = [scale](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  axpy(embedding, other.embedding);
  axpy(hidden_w, other.hidden_w);
  axpy(hidden_b, other.hidden_b);
  axpy(out_w, other.out_w);
  out_b += scale * other.out_b;
}

double ParamGrads::squared_norm() const {
  double s = 0.0;
  for (double x : embedding) s += x * x;
  for (double x : hidden_w) s += x * x;
  for (double x : hidden_b) s += x * x;
  for (double x : out_w) s += x * x;
  s += out_b * out_b;
  return s;
}

void ParamGrads::scale(double s) {
  for (double& x : embedding) x *= s;
  for (double& x : hidden_w) x *= s;
  for (double& x : hidden_b) x *= s;
  for (double& x : out_w) x *= s;
  out_b *= s;
}

std::size_t ParamGrads::coord_count() const {
  return embedding.size() + hidden_w.size() + hidden_b.size() + out_w.size() +
         1;
}

double ParamGrads::get_coord(std::size_t i) const {
  if (i < embedding.size()) return embedding[i];
  i -= embedding.size();
  if (i < hidden_w.size()) return hidden_w[i];
  i -= hidden_w.size();
  if (i < hidden_b.size()) return hidden_b[i];
  i -= hidden_b.size();
  if (i < out_w.size()) return out_w[i];
  i -= out_w.size();
  if (i == 0) return out_b;
  throw std::out_of_range("ParamGrads coordinate out of range");
}

std::uint64_t hash_token(std::uint64_t hash_seed, std::string_view token) {
  std::uint64_t h = kFnvOffset ^ hash_seed;
  for (char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

std::size_t token_bucket(const ScorerParams& p, std::string_view token) {
  return static_cast<std::size_t>(hash_token(p.hash_seed, token) %
                                  p.vocab_buckets);
}

namespace {

std::vector<std::size_t> text_buckets(const ScorerParams& p,
                                      std::string_view text) {
  std::vector<std::size_t> buckets;
  for (const std::string& tok : tokenize(text)) {
    buckets.push_back(token_bucket(p, tok));
  }
  if (buckets.empty()) {
    throw std::invalid_argument("encode: text has no tokens: \"" +
                                std::string(text) + "\"");
  }
  return buckets;
}

template <typename Real>
std::vector<Real> mean_rows_t(const ScorerParams& p,
                              std::span<const std::size_t> buckets) {
  const std::size_t d = p.embed_dim;
  std::vector<Real> out(d, Real(0));
  for (std::size_t b : buckets) {
    const double* row = p.embedding.data() + b * d;
    for (std::size_t i = 0; i < d; ++i) out[i] += row[i];
  }
  const Real inv = Real(1) / static_cast<Real>(buckets.size());
  for (Real& x : out) x *= inv;
  return out;
}

std::vector<double> mean_rows(const ScorerParams& p,
                              std::span<const std::size_t> buckets) {
  return mean_rows_t<double>(p, buckets);
}

// z = hidden_w^T [q; o] + hidden_b, t = tanh(z), s = out_w . t + out_b.
template <typename Real>
Real forward_mlp_t(const ScorerParams& p, std::span<const Real> q,
                   std::span<const Real> o, std::vector<Real>& tanh_z) {
  const std::size_t d = p.embed_dim;
  const std::size_t h = p.hidden_dim;
  tanh_z.assign(p.hidden_b.begin(), p.hidden_b.end());
  for (std::size_t i = 0; i < d; ++i) {
    const Real ui = q[i];
    const double* wrow = p.hidden_w.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) tanh_z[j] += ui * wrow[j];
  }
  for (std::size_t i = 0; i < d; ++i) {
    const Real ui = o[i];
    const double* wrow = p.hidden_w.data() + (d + i) * h;
    for (std::size_t j = 0; j < h; ++j) tanh_z[j] += ui * wrow[j];
  }
  Real s = p.out_b;
  for (std::size_t j = 0; j < h; ++j) {
    tanh_z[j] = std::tanh(tanh_z[j]);
    s += p.out_w[j] * tanh_z[j];
  }
  return s;
}

double forward_mlp(const ScorerParams& p, std::span<const double> q,
                   std::span<const double> o, std::vector<double>& tanh_z) {
  return forward_mlp_t<double>(p, q, o, tanh_z);
}

}  // namespace

std::vector<double> encode(const ScorerParams& p, std::string_view text) {
  return mean_rows(p, text_buckets(p, text));
}

double score(const ScorerParams& p, std::string_view question,
             std::string_view option) {
  std::vector<double> q = encode(p, question);
  std::vector<double> o = encode(p, option);
  std::vector<double> tanh_z;
  return forward_mlp(p, q, o, tanh_z);
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("softmax: empty input");
  double max_s = scores[0];
  for (double s : scores) max_s = std::max(max_s, s);
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - max_s);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (double& x : out) x *= inv;
  return out;
}

Distribution predict(const ScorerParams& p, std::string_view question,
                     std::span<const std::string> options) {
  if (options.size() < 2) {
    throw std::invalid_argument("predict: need at least 2 options");
  }
  std::vector<double> q = encode(p, question);
  std::vector<double> scores(options.size());
  std::vector<double> tanh_z;
  for (std::size_t j = 0; j < options.size(); ++j) {
    std::vector<double> o = encode(p, options[j]);
    scores[j] = forward_mlp(p, q, o, tanh_z);
  }
  return Distribution{softmax(scores)};
}

long double gold_probability_ld(const ScorerParams& p,
                                std::string_view question,
                                std::span<const std::string> options,
                                int gold_index) {
  if (gold_index < 0 || gold_index >= static_cast<int>(options.size())) {
    throw std::invalid_argument("gold_probability_ld: gold_index out of range");
  }
  const std::vector<std::size_t> qb = text_buckets(p, question);
  const std::vector<long double> q = mean_rows_t<long double>(p, qb);
  std::vector<long double> scores(options.size());
  std::vector<long double> tanh_z;
  for (std::size_t j = 0; j < options.size(); ++j) {
    const std::vector<std::size_t> ob = text_buckets(p, options[j]);
    const std::vector<long double> o = mean_rows_t<long double>(p, ob);
    scores[j] = forward_mlp_t<long double>(p, q, o, tanh_z);
  }
  long double max_s = scores[0];
  for (long double s : scores) max_s = std::max(max_s, s);
  long double total = 0.0L;
  for (long double s : scores) total += std::exp(s - max_s);
  return std::exp(scores[gold_index] - max_s) / total;
}

void backward_into(const ScorerParams& p, const BackwardItem& item,
                   ParamGrads& grads) {
  const std::size_t d = p.embed_dim;
  const std::size_t h = p.hidden_dim;
  const auto& options = *item.options;
  if (item.upstream.size() != options.size()) {
    throw std::invalid_argument("backward: upstream size != option count");
  }
  if (!all_finite(item.upstream)) {
    throw std::invalid_argument("backward: non-finite upstream gradient");
  }

  const std::vector<std::size_t> q_buckets = text_buckets(p, *item.question);
  const std::vector<double> q_enc = mean_rows(p, q_buckets);

  std::vector<std::vector<std::size_t>> o_buckets(options.size());
  std::vector<std::vector<double>> o_enc(options.size());
  std::vector<std::vector<double>> tanh_z(options.size());
  std::vector<double> scores(options.size());
  for (std::size_t j = 0; j < options.size(); ++j) {
    o_buckets[j] = text_buckets(p, options[j]);
    o_enc[j] = mean_rows(p, o_buckets[j]);
    scores[j] = forward_mlp(p, q_enc, o_enc[j], tanh_z[j]);
  }
  const std::vector<double> probs = softmax(scores);

  // softmax backward: ds_j = p_j * (up_j - sum_t up_t p_t)
  double up_dot_p = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    up_dot_p += item.upstream[j] * probs[j];
  }

  std::vector<double> dz(h);
  std::vector<double> dq_total(d, 0.0);
  for (std::size_t j = 0; j < options.size(); ++j) {
    const double gs = probs[j] * (item.upstream[j] - up_dot_p);
    grads.out_b += gs;
    const std::vector<double>& t = tanh_z[j];
    for (std::size_t k = 0; k < h; ++k) {
      grads.out_w[k] += gs * t[k];
      dz[k] = gs * p.out_w[k] * (1.0 - t[k] * t[k]);
    }
    for (std::size_t k = 0; k < h; ++k) grads.hidden_b[k] += dz[k];
    // hidden weights and input gradient, question half then option half
    for (std::size_t i = 0; i < d; ++i) {
      const double ui = q_enc[i];
      const double* wrow = p.hidden_w.data() + i * h;
      double* grow = grads.hidden_w.data() + i * h;
      double du = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        grow[k] += ui * dz[k];
        du += wrow[k] * dz[k];
      }
      dq_total[i] += du;
    }
    const double inv_o = 1.0 / static_cast<double>(o_buckets[j].size());
    for (std::size_t i = 0; i < d; ++i) {
      const double ui = o_enc[j][i];
      const double* wrow = p.hidden_w.data() + (d + i) * h;
      double* grow = grads.hidden_w.data() + (d + i) * h;
      double du = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        grow[k] += ui * dz[k];
        du += wrow[k] * dz[k];
      }
      const double per_row = du * inv_o;
      for (std::size_t b : o_buckets[j]) {
        grads.embedding[b * d + i] += per_row;
      }
    }
  }

  const double inv_q = 1.0 / static_cast<double>(q_buckets.size());
  for (std::size_t i = 0; i < d; ++i) {
    const double per_row = dq_total[i] * inv_q;
    for (std::size_t b : q_buckets) {
      grads.embedding[b * d + i] += per_row;
    }
  }
}

ParamGrads backward(const ScorerParams& p, std::span<const BackwardItem> batch) {
  ParamGrads grads = ParamGrads::zeros_like(p);
  for (const BackwardItem& item : batch) backward_into(p, item, grads);
  return grads;
}

double finite_diff_check(
    const ScorerParams& params,
    const std::function<long double(const ScorerParams&)>& loss_fn,
    const ParamGrads& analytic, std::size_t n_coords, double h,
    std::uint64_t seed) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_diff_check: step h must be > 0");
  }
  if (analytic.coord_count() != params.coord_count()) {
    throw std::invalid_argument("finite_diff_check: gradient shape mismatch");
  }
  ScorerParams work = params;
  Rng rng(seed);
  const std::size_t n = params.coord_count();
  double max_rel = 0.0;
  for (std::size_t c = 0; c < n_coords; ++c) {
    const std::size_t idx = rng.uniform_index(n);
    const double orig = work.get_coord(idx);
    work.set_coord(idx, orig + h);
    const long double f_plus = loss_fn(work);
    work.set_coord(idx, orig - h);
    const long double f_minus = loss_fn(work);
    work.set_coord(idx, orig);
    const double numeric =
        static_cast<double>((f_plus - f_minus) / (2.0L * h));
    const double a = analytic.get_coord(idx);
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
  }
  return max_rel;
}

namespace {

constexpr char kMagic[8] = {'C', 'E', 'T', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64s(std::ofstream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const ScorerParams& p, const std::string& path) {
  validate_params(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, p.vocab_buckets);
  write_u64(out, p.embed_dim);
  write_u64(out, p.hidden_dim);
  write_u64(out, p.hash_seed);
  write_f64s(out, p.embedding);
  write_f64s(out, p.hidden_w);
  write_f64s(out, p.hidden_b);
  write_f64s(out, p.out_w);
  write_f64s(out, std::span<const double>(&p.out_b, 1));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

ScorerParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  const std::streamsize file_size = in.tellg();
  in.seekg(0);

  char magic[8];
  if (file_size < static_cast<std::streamsize>(sizeof(magic) + 4 * 8) ||
      !in.read(magic, sizeof(magic))) {
    throw std::runtime_error("load_checkpoint: " + path +
                             ": truncated or corrupt file");
  }
  if (std::memcmp(magic, kMagic, 7) != 0) {
    throw std::runtime_error("load_checkpoint: " + path +
                             ": not a CET checkpoint");
  }
  if (magic[7] != kMagic[7]) {
    throw std::runtime_error(
        "load_checkpoint: " + path + ": unsupported checkpoint version '" +
        std::string(1, magic[7]) + "' (expected '1')");
  }

  auto read_u64 = [&]() {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
      throw std::runtime_error("load_checkpoint: " + path +
                               ": truncated header");
    }
    return v;
  };
  ScorerParams p;
  p.vocab_buckets = read_u64();
  p.embed_dim = read_u64();
  p.hidden_dim = read_u64();
  p.hash_seed = read_u64();
  try {
    check_dims(p.vocab_buckets, p.embed_dim, p.hidden_dim);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: " + path +
                             ": bad shape: " + e.what());
  }

  const std::size_t n_doubles = p.vocab_buckets * p.embed_dim +
                                2 * p.embed_dim * p.hidden_dim +
                                2 * p.hidden_dim + 1;
  const std::streamsize expected =
      static_cast<std::streamsize>(sizeof(magic) + 4 * 8 + n_doubles * 8);
  if (file_size != expected) {
    throw std::runtime_error(
        "load_checkpoint: " + path + ": size mismatch (got " +
        std::to_string(file_size) + " bytes, expected " +
        std::to_string(expected) + "); truncated or corrupt file");
  }

  auto read_f64s = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(n * sizeof(double)))) {
      throw std::runtime_error("load_checkpoint: " + path + ": short read");
    }
  };
  read_f64s(p.embedding, p.vocab_buckets * p.embed_dim);
  read_f64s(p.hidden_w, 2 * p.embed_dim * p.hidden_dim);
  read_f64s(p.hidden_b, p.hidden_dim);
  read_f64s(p.out_w, p.hidden_dim);
  if (!in.read(reinterpret_cast<char*>(&p.out_b), sizeof(double))) {
    throw std::runtime_error("load_checkpoint: " + path + ": short read");
  }
  try {
    validate_params(p);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: " + path +
                             ": corrupt payload: " + e.what());
  }
  return p;
}

}  // namespace cet
