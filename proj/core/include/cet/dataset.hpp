#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cet {

// One multiple-choice question. `gold_index` points into `options`;
// option texts must stay pairwise distinct after answer normalization.
struct QaSample {
  std::int64_t id = 0;
  std::string question;
  std::vector<std::string> options;
  int gold_index = 0;

  const std::string& gold_text() const { return options[gold_index]; }
};

struct QaDataset {
  std::string name;
  std::string split = "train";  // train | dev | test
  std::vector<QaSample> samples;

  std::size_t size() const { return samples.size(); }
};

// Validates QaSample invariants; throws with `context` in the message.
void validate_sample(const QaSample& sample, const std::string& context);

// One JSON record per line: {"id":..,"question":..,"options":[..],"gold_index":..}
QaDataset load_jsonl(const std::string& path);
void save_jsonl(const QaDataset& ds, const std::string& path);

struct StatsRecord {
  std::size_t count = 0;
  double mean_options = 0.0;
  double mean_question_tokens = 0.0;  // whitespace tokens
  double mean_option_tokens = 0.0;
};

StatsRecord dataset_stats(const QaDataset& ds);

// floor(fraction * N) samples drawn uniformly without replacement, kept in
// original order. fraction == 1 returns the dataset unchanged.
QaDataset subsample(const QaDataset& ds, double fraction, std::uint64_t seed);

// Synthetic corpus: every concept owns a token signature and a unique answer
// phrase; questions of one concept share signature tokens plus global noise
// tokens, so "same gold answer => shared knowledge" holds by construction.
// Each task re-uses a slice of the pretraining concepts (its overlap) and
// introduces fresh ones; distractor options come from the dataset's own
// concept pool.
struct SynthConfig {
  std::size_t n_concepts = 50;            // pretraining concepts
  std::size_t questions_per_concept = 20;
  std::size_t n_options = 4;
  std::size_t vocab_size = 2000;
  double distractor_overlap = 0.5;  // fraction of each task's concepts shared
                                    // with the pretraining concept set
  std::uint64_t seed = 1;
  std::size_t n_tasks = 3;
  std::size_t task_concepts = 30;  // concepts per task
  // question composition
  std::size_t signature_tokens = 6;       // per concept
  std::size_t signature_per_question = 4;
  std::size_t noise_per_question = 4;
  // Noise tokens come from a dedicated pool shared by every dataset
  // (0 = draw from the whole vocabulary). A small pool concentrates the
  // interference fine-tuning inflicts on common filler tokens.
  std::size_t noise_pool = 256;
  // Concepts per gold answer: aliased concepts ask differently-signed
  // questions about one answer, the way many QA questions share "airplane".
  std::size_t answer_alias = 3;
  // Task-side split for concepts shared with pretraining: scarce training
  // coverage makes task performance on them depend on retained knowledge.
  // Fresh task concepts and the pretraining set use fraction-based splits.
  std::size_t shared_train_questions = 6;
  std::size_t shared_dev_questions = 2;
};

struct SynthTask {
  QaDataset train;
  QaDataset dev;
  QaDataset test;
};

struct SynthCorpus {
  SynthTask pretrain;  // pretrain.test is the held-out retention probe
  std::vector<SynthTask> tasks;
};

SynthCorpus generate_synthetic(const SynthConfig& cfg);

}  // namespace cet
