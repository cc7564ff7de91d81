#include "cet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cet/rng.hpp"
#include "cet/text.hpp"

namespace cet {

using ordered_json = nlohmann::ordered_json;

void validate_sample(const QaSample& sample, const std::string& context) {
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(context + ": " + msg);
  };
  if (sample.id < 0) fail("id must be non-negative");
  if (tokenize(sample.question).empty()) fail("question is empty");
  if (sample.options.size() < 2 || sample.options.size() > 8) {
    fail("expected 2-8 options, got " + std::to_string(sample.options.size()));
  }
  if (sample.gold_index < 0 ||
      sample.gold_index >= static_cast<int>(sample.options.size())) {
    fail("gold_index " + std::to_string(sample.gold_index) +
         " out of range for " + std::to_string(sample.options.size()) +
         " options");
  }
  std::set<std::string> normalized;
  for (const std::string& opt : sample.options) {
    std::string norm;
    try {
      norm = normalize_answer(opt).normalized;
    } catch (const std::exception& e) {
      fail(std::string("option \"") + opt + "\": " + e.what());
    }
    if (!normalized.insert(norm).second) {
      fail("options not pairwise distinct after normalization (\"" + norm +
           "\")");
    }
  }
}

QaDataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);

  QaDataset ds;
  std::filesystem::path p(path);
  ds.name = p.stem().string();
  if (ds.name.find("test") != std::string::npos) {
    ds.split = "test";
  } else if (ds.name.find("dev") != std::string::npos) {
    ds.split = "dev";
  } else {
    ds.split = "train";
  }

  std::unordered_set<std::int64_t> seen_ids;
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
    QaSample s;
    try {
      s.id = rec.at("id").get<std::int64_t>();
      s.question = rec.at("question").get<std::string>();
      s.options = rec.at("options").get<std::vector<std::string>>();
      s.gold_index = rec.at("gold_index").get<int>();
    } catch (const std::exception& e) {
      throw std::runtime_error(context + ": bad record: " + e.what());
    }
    validate_sample(s, context);
    if (!seen_ids.insert(s.id).second) {
      throw std::runtime_error(context + ": duplicate id " +
                               std::to_string(s.id));
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    throw std::runtime_error("load_jsonl: " + path + ": empty dataset");
  }
  return ds;
}

void save_jsonl(const QaDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
  for (const QaSample& s : ds.samples) {
    ordered_json rec;
    rec["id"] = s.id;
    rec["question"] = s.question;
    rec["options"] = s.options;
    rec["gold_index"] = s.gold_index;
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_jsonl: write failed for " + path);
}

StatsRecord dataset_stats(const QaDataset& ds) {
  StatsRecord st;
  st.count = ds.samples.size();
  if (st.count == 0) return st;
  std::size_t total_options = 0;
  std::size_t total_q_tokens = 0;
  std::size_t total_o_tokens = 0;
  for (const QaSample& s : ds.samples) {
    total_options += s.options.size();
    total_q_tokens += count_tokens(s.question);
    for (const std::string& opt : s.options) total_o_tokens += count_tokens(opt);
  }
  st.mean_options = static_cast<double>(total_options) /
                    static_cast<double>(st.count);
  st.mean_question_tokens = static_cast<double>(total_q_tokens) /
                            static_cast<double>(st.count);
  st.mean_option_tokens = static_cast<double>(total_o_tokens) /
                          static_cast<double>(total_options);
  return st;
}

QaDataset subsample(const QaDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("subsample: fraction must be in (0,1]");
  }
  if (fraction == 1.0) return ds;
  const std::size_t n = ds.samples.size();
  const std::size_t m = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n)));
  if (m == 0) {
    throw std::runtime_error("subsample: fraction " + std::to_string(fraction) +
                             " of " + std::to_string(n) +
                             " samples selects nothing");
  }
  Rng rng(seed);
  std::vector<std::size_t> picked = rng.sample_without_replacement(n, m);
  std::sort(picked.begin(), picked.end());  // keep original order
  QaDataset out;
  out.name = ds.name;
  out.split = ds.split;
  out.samples.reserve(m);
  for (std::size_t idx : picked) out.samples.push_back(ds.samples[idx]);
  return out;
}

namespace {

std::string padded(const std::string& prefix, std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  if (digits.size() < width) {
    digits.insert(digits.begin(), width - digits.size(), '0');
  }
  return prefix + digits;
}

struct SplitCounts {
  std::size_t train, dev, test;
};

SplitCounts split_counts(std::size_t q, double fdev, double ftest) {
  SplitCounts c;
  c.dev = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fdev * static_cast<double>(q))));
  c.test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(ftest * static_cast<double>(q))));
  if (c.dev + c.test >= q) {
    throw std::invalid_argument(
        "generate_synthetic: questions_per_concept too small to split");
  }
  c.train = q - c.dev - c.test;
  return c;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_options < 2 || cfg.n_options > 8) {
    throw std::invalid_argument("generate_synthetic: n_options must be in [2,8]");
  }
  if (cfg.vocab_size < 10 * cfg.n_concepts) {
    throw std::invalid_argument(
        "generate_synthetic: vocab_size must be >= 10 * n_concepts");
  }
  if (cfg.n_concepts == 0 || cfg.questions_per_concept == 0) {
    throw std::invalid_argument("generate_synthetic: empty configuration");
  }
  if (cfg.distractor_overlap < 0.0 || cfg.distractor_overlap > 1.0) {
    throw std::invalid_argument(
        "generate_synthetic: distractor_overlap must be in [0,1]");
  }
  if (cfg.signature_per_question == 0 ||
      cfg.signature_per_question > cfg.signature_tokens) {
    throw std::invalid_argument(
        "generate_synthetic: need 1 <= signature_per_question <= "
        "signature_tokens");
  }
  // Shared concepts per task: each task re-uses its own slice of the
  // pretraining concepts so tasks stay mutually disjoint.
  const std::size_t shared_per_task = static_cast<std::size_t>(
      std::floor(cfg.distractor_overlap *
                     static_cast<double>(cfg.task_concepts) +
                 0.5));
  if (shared_per_task > cfg.task_concepts) {
    throw std::invalid_argument("generate_synthetic: overlap exceeds task size");
  }
  if (shared_per_task > cfg.n_concepts) {
    throw std::invalid_argument(
        "generate_synthetic: pretraining concepts cannot cover the requested "
        "overlap");
  }
  const std::size_t fresh_per_task = cfg.task_concepts - shared_per_task;
  const std::size_t total_concepts =
      cfg.n_concepts + cfg.n_tasks * fresh_per_task;
  if (cfg.noise_pool >= cfg.vocab_size) {
    throw std::invalid_argument(
        "generate_synthetic: noise_pool must be smaller than vocab_size");
  }
  const std::size_t signature_region = cfg.vocab_size - cfg.noise_pool;
  if (total_concepts * cfg.signature_tokens > signature_region) {
    throw std::invalid_argument(
        "generate_synthetic: vocab too small for disjoint concept signatures");
  }
  if (cfg.answer_alias == 0) {
    throw std::invalid_argument("generate_synthetic: answer_alias must be >= 1");
  }

  Rng rng(cfg.seed);

  const std::size_t vocab_width = std::to_string(cfg.vocab_size - 1).size();
  std::vector<std::string> vocab(cfg.vocab_size);
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    vocab[i] = padded("w", i, vocab_width);
  }

  // Disjoint token signatures drawn from the signature region; the noise
  // pool occupies the tail of the vocabulary.
  std::vector<std::size_t> vocab_order(signature_region);
  for (std::size_t i = 0; i < signature_region; ++i) vocab_order[i] = i;
  rng.shuffle(vocab_order);
  const std::size_t noise_base =
      cfg.noise_pool == 0 ? 0 : signature_region;
  const std::size_t noise_count =
      cfg.noise_pool == 0 ? cfg.vocab_size : cfg.noise_pool;

  struct Concept {
    std::vector<std::size_t> signature;  // vocab indices
    std::size_t answer_id;
    std::string answer;
  };
  // Aliased answers: `answer_alias` consecutive concepts of a block share one
  // gold answer while keeping their own signatures, so one answer is asked
  // about by several differently-phrased question families.
  const std::size_t alias = std::max<std::size_t>(1, cfg.answer_alias);
  const std::size_t pretrain_answers = (cfg.n_concepts + alias - 1) / alias;
  const std::size_t fresh_answers_per_task =
      fresh_per_task == 0 ? 0 : (fresh_per_task + alias - 1) / alias;
  auto answer_id_of = [&](std::size_t c) {
    if (c < cfg.n_concepts) return c / alias;
    const std::size_t rel = c - cfg.n_concepts;
    const std::size_t t = rel / std::max<std::size_t>(1, fresh_per_task);
    const std::size_t j = rel % std::max<std::size_t>(1, fresh_per_task);
    return pretrain_answers + t * fresh_answers_per_task + j / alias;
  };
  const std::size_t total_answers =
      pretrain_answers + cfg.n_tasks * fresh_answers_per_task;
  const std::size_t answer_width =
      std::max<std::size_t>(3, std::to_string(total_answers).size());
  std::vector<Concept> concepts(total_concepts);
  {
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < total_concepts; ++c) {
      concepts[c].signature.assign(vocab_order.begin() + cursor,
                                   vocab_order.begin() + cursor +
                                       cfg.signature_tokens);
      cursor += cfg.signature_tokens;
      concepts[c].answer_id = answer_id_of(c);
      concepts[c].answer = padded("ans", concepts[c].answer_id, answer_width);
    }
  }

  // Concept index ranges per dataset: pretrain owns [0, n_concepts); every
  // task re-uses pretrain slice [0, shared) plus its own fresh block. The
  // common slice plays the role of knowledge that spans pretraining and all
  // downstream tasks.
  auto pretrain_range = [&]() {
    std::vector<std::size_t> r(cfg.n_concepts);
    for (std::size_t i = 0; i < cfg.n_concepts; ++i) r[i] = i;
    return r;
  };
  auto task_range = [&](std::size_t t) {
    std::vector<std::size_t> r;
    r.reserve(cfg.task_concepts);
    for (std::size_t i = 0; i < shared_per_task; ++i) r.push_back(i);
    for (std::size_t i = 0; i < fresh_per_task; ++i) {
      r.push_back(cfg.n_concepts + t * fresh_per_task + i);
    }
    return r;
  };

  auto make_question = [&](const Concept& con) {
    std::vector<std::string> tokens;
    for (std::size_t s : rng.sample_without_replacement(
             cfg.signature_tokens, cfg.signature_per_question)) {
      tokens.push_back(vocab[con.signature[s]]);
    }
    for (std::size_t v :
         rng.sample_without_replacement(noise_count, cfg.noise_per_question)) {
      tokens.push_back(vocab[noise_base + v]);
    }
    rng.shuffle(tokens);
    std::string q;
    for (const std::string& t : tokens) {
      if (!q.empty()) q.push_back(' ');
      q += t;
    }
    return q;
  };

  // Distractor options: n_options-1 distinct answers from the dataset's own
  // answer pool, excluding the gold answer.
  auto pool_answers = [&](const std::vector<std::size_t>& pool) {
    std::vector<std::size_t> ids;
    std::unordered_set<std::size_t> seen;
    for (std::size_t c : pool) {
      if (seen.insert(concepts[c].answer_id).second) {
        ids.push_back(concepts[c].answer_id);
      }
    }
    return ids;
  };

  auto make_sample = [&](std::size_t concept_id,
                         const std::vector<std::size_t>& answers) {
    QaSample s;
    s.question = make_question(concepts[concept_id]);
    std::vector<std::string> options{concepts[concept_id].answer};
    std::unordered_set<std::size_t> used{concepts[concept_id].answer_id};
    for (std::size_t slot = 0; slot + 1 < cfg.n_options; ++slot) {
      std::vector<std::size_t> avail;
      for (std::size_t a : answers) {
        if (!used.count(a)) avail.push_back(a);
      }
      if (avail.empty()) {
        throw std::runtime_error(
            "generate_synthetic: distractor answer pool exhausted");
      }
      std::size_t a = avail[rng.uniform_index(avail.size())];
      used.insert(a);
      options.push_back(padded("ans", a, answer_width));
    }
    rng.shuffle(options);
    s.options = options;
    for (std::size_t j = 0; j < options.size(); ++j) {
      if (options[j] == concepts[concept_id].answer) {
        s.gold_index = static_cast<int>(j);
        break;
      }
    }
    return s;
  };

  // Shared concepts inside tasks get the scarce split from the config.
  const SplitCounts shared_split = [&]() {
    SplitCounts c;
    c.train = cfg.shared_train_questions;
    c.dev = cfg.shared_dev_questions;
    if (c.train == 0 ||
        c.train + c.dev >= cfg.questions_per_concept) {
      throw std::invalid_argument(
          "generate_synthetic: bad shared-concept split");
    }
    c.test = cfg.questions_per_concept - c.train - c.dev;
    return c;
  }();

  auto build_task = [&](const std::string& name,
                        const std::vector<std::size_t>& pool,
                        const SplitCounts& fresh_counts, bool is_task) {
    SynthTask task;
    task.train.name = task.dev.name = task.test.name = name;
    task.train.split = "train";
    task.dev.split = "dev";
    task.test.split = "test";
    const std::vector<std::size_t> answers = pool_answers(pool);
    if (answers.size() < cfg.n_options) {
      throw std::invalid_argument(
          "generate_synthetic: not enough distinct answers for the option "
          "count; lower answer_alias or n_options");
    }
    for (std::size_t c : pool) {
      const bool shared_in_task = is_task && c < cfg.n_concepts;
      const SplitCounts& counts = shared_in_task ? shared_split : fresh_counts;
      for (std::size_t q = 0; q < cfg.questions_per_concept; ++q) {
        QaSample s = make_sample(c, answers);
        QaDataset* target;
        if (q < counts.train) {
          target = &task.train;
        } else if (q < counts.train + counts.dev) {
          target = &task.dev;
        } else {
          target = &task.test;
        }
        s.id = static_cast<std::int64_t>(target->samples.size());
        target->samples.push_back(std::move(s));
      }
    }
    return task;
  };

  SynthCorpus corpus;
  corpus.pretrain =
      build_task("synth-pretrain", pretrain_range(),
                 split_counts(cfg.questions_per_concept, 0.1, 0.1), false);
  const SplitCounts task_split =
      split_counts(cfg.questions_per_concept, 0.2, 0.2);
  for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
    corpus.tasks.push_back(build_task("synth-task" + std::to_string(t),
                                      task_range(t), task_split, true));
  }
  return corpus;
}

}  // namespace cet
