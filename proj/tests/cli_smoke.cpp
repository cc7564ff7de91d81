// End-to-end runs of the cet binary: every subcommand once, on a small
// synthetic corpus, checking exit codes and the files left behind.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++failures;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CET_CLI_PATH) + " " + args +
                          " >> cli_smoke.log 2>&1";
  return std::system(cmd.c_str());
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

int main() {
  fs::path dir = fs::temp_directory_path() / "cet_cli_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::current_path(dir);

  write_file("synth.cfg",
             "version = 1\n"
             "synth.n_concepts = 8\n"
             "synth.questions_per_concept = 10\n"
             "synth.n_options = 3\n"
             "synth.vocab_size = 300\n"
             "synth.noise_pool = 64\n"
             "synth.n_tasks = 1\n"
             "synth.task_concepts = 6\n"
             "synth.shared_train_questions = 6\n"
             "synth.shared_dev_questions = 2\n"
             "synth.answer_alias = 1\n"
             "synth.seed = 9\n");

  expect(run_cli("data gen-synth --config synth.cfg --out-dir data") == 0,
         "data gen-synth");
  expect(fs::exists("data/pretrain_train.jsonl") &&
             fs::exists("data/task0_test.jsonl"),
         "gen-synth wrote the split files");

  expect(run_cli("data stats data/task0_train.jsonl data/task0_dev.jsonl") == 0,
         "data stats");

  expect(run_cli("data subsample data/task0_train.jsonl --fraction 0.5 "
                 "--seed 3 --out data/half.jsonl") == 0,
         "data subsample");
  {
    cet::QaDataset full = cet::load_jsonl("data/task0_train.jsonl");
    cet::QaDataset half = cet::load_jsonl("data/half.jsonl");
    expect(half.samples.size() == full.samples.size() / 2,
           "subsample halved the dataset");
  }

  expect(run_cli("sim --backend exact --a \"Pet Shops\" --b \"pet shop\"") == 0,
         "sim exact");
  expect(run_cli("sim --backend jaccard --a \"pet shop\" --b \"pet store\"") ==
             0,
         "sim jaccard");
  write_file("vectors.txt", "pet 1 0\nshop 0 1\nstore 0.6 0.8\n");
  expect(run_cli("sim --backend embed --vectors vectors.txt --a \"pet shop\" "
                 "--b \"pet store\"") == 0,
         "sim embed");
  expect(run_cli("sim --backend embed --a x --b y") != 0,
         "sim embed without vectors fails");

  expect(run_cli("knn build --dataset data/task0_train.jsonl --metric gold "
                 "--backend exact --K 5 --theta 1.0 --selector largest "
                 "--out groups.jsonl") == 0,
         "knn build gold");
  {
    auto groups = cet::load_groups_jsonl("groups.jsonl");
    cet::QaDataset tr = cet::load_jsonl("data/task0_train.jsonl");
    expect(groups.size() == tr.samples.size(), "one group per anchor");
  }

  write_file("train.cfg",
             "version = 1\n"
             "data.train = data/task0_train.jsonl\n"
             "data.dev = data/task0_dev.jsonl\n"
             "data.groups = groups.jsonl\n"
             "model.vocab_buckets = 256\n"
             "model.embed_dim = 8\n"
             "model.hidden_dim = 8\n"
             "train.epochs = 2\n"
             "train.batch_size = 16\n"
             "train.K = 5\n"
             "train.seed = 4\n");
  expect(run_cli("train --config train.cfg --out model.ckpt") == 0, "train");
  expect(fs::exists("model.ckpt"), "train wrote a checkpoint");

  expect(run_cli("knn build --dataset data/task0_train.jsonl --metric avg "
                 "--checkpoint model.ckpt --K 3 --theta 0.0 "
                 "--selector largest --out groups_avg.jsonl") == 0,
         "knn build avg from checkpoint");

  // train again from the checkpoint (chain-style initialization)
  write_file("train2.cfg",
             "version = 1\n"
             "data.train = data/task0_train.jsonl\n"
             "data.dev = data/task0_dev.jsonl\n"
             "model.checkpoint = model.ckpt\n"
             "train.epochs = 1\n"
             "train.K = 0\n"
             "train.seed = 5\n");
  expect(run_cli("train --config train2.cfg --out model2.ckpt") == 0,
         "train from init checkpoint");

  write_file("exp.cfg",
             "version = 1\n"
             "synth.n_concepts = 8\n"
             "synth.questions_per_concept = 10\n"
             "synth.n_options = 3\n"
             "synth.vocab_size = 300\n"
             "synth.noise_pool = 64\n"
             "synth.n_tasks = 2\n"
             "synth.task_concepts = 6\n"
             "synth.shared_train_questions = 6\n"
             "synth.shared_dev_questions = 2\n"
             "synth.answer_alias = 1\n"
             "model.vocab_buckets = 256\n"
             "model.embed_dim = 8\n"
             "model.hidden_dim = 8\n"
             "train.epochs = 2\n"
             "pretrain.epochs = 2\n"
             "exp.seeds = 2\n"
             "exp.threads = 1\n"
             "exp.fractions = 0.5,1.0\n"
             "exp.cycles = 1\n");
  expect(run_cli("exp retention --config exp.cfg --out out_ret") == 0,
         "exp retention");
  expect(run_cli("exp chain --config exp.cfg --out out_chain") == 0,
         "exp chain");
  expect(run_cli("exp ablate --config exp.cfg --out out_abl") == 0,
         "exp ablate");
  expect(run_cli("exp lowres --config exp.cfg --out out_low") == 0,
         "exp lowres");
  int csvs = 0;
  for (const char* d : {"out_ret", "out_chain", "out_abl", "out_low"}) {
    for (const auto& e : fs::directory_iterator(d)) {
      if (e.path().extension() == ".csv") ++csvs;
    }
  }
  expect(csvs == 4, "each experiment wrote a csv");

  // CET_OUT_DIR is honoured when --out is omitted
  setenv("CET_OUT_DIR", (dir / "env_out").string().c_str(), 1);
  expect(run_cli("exp retention --config exp.cfg") == 0,
         "exp retention with CET_OUT_DIR");
  expect(fs::exists(dir / "env_out"), "CET_OUT_DIR output root used");

  expect(run_cli("gradcheck") == 0, "gradcheck exits zero within tolerance");
  expect(run_cli("data stats missing-file.jsonl") != 0,
         "missing file exits nonzero");

  if (failures == 0) {
    std::printf("cli smoke: all checks passed\n");
    return 0;
  }
  std::printf("cli smoke: %d failures (see %s/cli_smoke.log)\n", failures,
              dir.string().c_str());
  return 1;
}
