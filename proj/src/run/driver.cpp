/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "run/driver.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "common/rng.hpp"
#include "data/corpus.hpp"
#include "nn/model.hpp"
#include "train/trainer.hpp"

namespace cntm::run {

namespace fs = std::filesystem;

const char* const kBenchFiles[5] = {"train.tsv", "dev.tsv", "test-full.tsv",
                                    "test-long.tsv", "test-very-long.tsv"};

namespace {

uint64_t sub_seed(uint64_t seed, const std::string& name) {
  return Rng(seed, name).next_u64();
}

data::Corpus generate(const cfg::RunConfig& cfg, uint64_t seed,
                      const std::string& stream, int64_t count,
                      data::LenRange len) {
  if (cfg.task() == data::TaskKind::kCopy) {
    return data::gen_copy(sub_seed(seed, stream), count, len, cfg.task_vocab);
  }
  return data::gen_repeat_copy(sub_seed(seed, stream), count, len,
                               cfg.task_repeats(), cfg.task_vocab);
}

std::string describe(const std::string& path, const data::Corpus& corpus) {
  const data::DurationStats d = data::duration_stats(corpus);
  char line[256];
  std::snprintf(line, sizeof(line),
                "wrote %s: %zu utterances, duration mean %.2f range [%g, "
                "%g]\n",
                path.c_str(), corpus.size(), d.mean, d.min, d.max);
  return line;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CNTM_CHECK(in.is_open(), ErrorKind::kData, "cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Decoded hypothesis in raw task-token space. Content ids come back shifted
// past the reserved control tokens; anything inside the reserved range is a
// malformed emission and is dropped rather than mapped onto data tokens.
std::vector<int64_t> unshift(const std::vector<int64_t>& shifted) {
  std::vector<int64_t> raw;
  raw.reserve(shifted.size());
  for (int64_t t : shifted)
    if (t >= train::kSpecialTokens) raw.push_back(t - train::kSpecialTokens);
  return raw;
}

const eval::SplitScore* find_split(const std::vector<eval::SplitScore>& rows,
                                   const std::string& name) {
  for (const auto& r : rows)
    if (r.split == name) return &r;
  return nullptr;
}

// One table block: split rows with optional baseline and reduction columns.
std::string render_table(const std::vector<eval::SplitScore>& rows,
                         const std::vector<eval::SplitScore>& baseline) {
  std::string out;
  char line[256];
  if (baseline.empty()) {
    out += "split            wer (cer)\n";
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%-16s %s\n", r.split.c_str(),
                    eval::format_wer_cer(r.report.wer, r.report.cer).c_str());
      out += line;
    }
    return out;
  }
  out += "split            wer (cer)        baseline         rel. wer "
         "reduction %\n";
  for (const auto& r : rows) {
    const eval::SplitScore* base = find_split(baseline, r.split);
    CNTM_CHECK(base != nullptr, ErrorKind::kData,
               "baseline report lacks split: " + r.split);
    std::snprintf(
        line, sizeof(line), "%-16s %-16s %-16s %.1f\n", r.split.c_str(),
        eval::format_wer_cer(r.report.wer, r.report.cer).c_str(),
        eval::format_wer_cer(base->report.wer, base->report.cer).c_str(),
        eval::relative_reduction(base->report.wer, r.report.wer));
    out += line;
  }
  return out;
}

}  // namespace

std::string gen_bench(const cfg::RunConfig& cfg, uint64_t seed,
                      const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const int64_t count = cfg.task_count;
  CNTM_CHECK(count >= 1, ErrorKind::kConfig,
             "task.count must be >= 1 to generate the benchmark");
  const int64_t test_count = std::max<int64_t>(count / 10, 1);
  std::string summary;

  auto emit = [&](const char* file, const data::Corpus& corpus) {
    const std::string path = (fs::path(out_dir) / file).string();
    data::write_corpus(path, corpus);
    summary += describe(path, corpus);
  };

  emit(kBenchFiles[0], generate(cfg, seed, "gen/train", count,
                                cfg.task_len()));
  emit(kBenchFiles[1], generate(cfg, seed, "gen/dev", test_count,
                                cfg.task_len()));
  emit(kBenchFiles[2], generate(cfg, seed, "gen/test-full", test_count,
                                cfg.task_len()));
  emit(kBenchFiles[3],
       generate(cfg, seed, "gen/test-long", test_count, {16, 24}));

  // Very-long split: chain short segments and merge them, the synthetic
  // analogue of concatenating continuous recording segments. Base lengths
  // 13..16 in groups of 2..4 give merged durations 26..64; the chainer can
  // leave an unmerged tail shorter than one group, which falls outside the
  // split's duration band and is dropped.
  data::Corpus base = generate(cfg, seed, "gen/test-very-long",
                               test_count * 3, {13, 16});
  base = data::assign_chains(std::move(base),
                             sub_seed(seed, "gen/test-very-long/chains"),
                             {2, 4});
  data::Corpus merged = data::concat_segments(base);
  std::erase_if(merged,
                [](const data::Utterance& u) { return u.duration < 25.0; });
  emit(kBenchFiles[4], merged);
  return summary;
}

std::string gen_split(const cfg::RunConfig& cfg, uint64_t seed,
                      const std::string& out_path, const std::string& split,
                      int64_t k) {
  cfg.validate();
  data::SplitSpec spec;
  if (split == "full") {
    spec.kind = data::SplitSpec::Kind::kFull;
  } else if (split == "longest-k") {
    spec.kind = data::SplitSpec::Kind::kLongestK;
    spec.k = k;
  } else if (split == "concat-longest-k") {
    spec.kind = data::SplitSpec::Kind::kConcatThenLongestK;
    spec.k = k;
  } else {
    throw Error(ErrorKind::kUsage, "unknown split rule: " + split);
  }

  data::Corpus corpus =
      generate(cfg, seed, "gen/split", cfg.task_count, cfg.task_len());
  if (spec.kind == data::SplitSpec::Kind::kConcatThenLongestK) {
    corpus = data::assign_chains(std::move(corpus),
                                 sub_seed(seed, "gen/split/chains"),
                                 cfg.task_groups());
  }
  const data::Corpus out = data::apply_split(corpus, spec);
  if (const fs::path parent = fs::path(out_path).parent_path();
      !parent.empty()) {
    fs::create_directories(parent);
  }
  data::write_corpus(out_path, out);
  return describe(out_path, out);
}

std::string train_run(const cfg::RunConfig& cfg, bool use_memory,
                      uint64_t seed, const std::string& train_path,
                      const std::string& dev_path, const std::string& ckpt_out,
                      const std::string& log_out) {
  cfg.validate();
  const data::Corpus train_c = data::read_corpus(train_path);
  const data::Corpus dev_c = data::read_corpus(dev_path);
  const data::TaskKind task = cfg.task();
  const int64_t vocab = cfg.task_vocab;
  const int64_t width = train::model_vocab(task, vocab);

  nn::Model<double> model(cfg.model_config(width, use_memory), seed);
  train::TrainConfig tc = cfg.train_config();
  tc.seed = seed;
  tc.dump_path = ckpt_out + ".diverged";
  const nn::ObjectiveConfig obj = cfg.objective();

  const train::TrainResult result =
      train::train(model, train_c, dev_c, task, vocab, obj, tc, log_out);
  train::save_checkpoint(ckpt_out, result.final_checkpoint);

  char line[256];
  std::string summary;
  std::snprintf(line, sizeof(line), "trained %lld steps over %lld epochs\n",
                static_cast<long long>(result.steps),
                static_cast<long long>(tc.epochs));
  summary += line;
  std::snprintf(line, sizeof(line), "best dev loss %.6f\n", result.best_dev);
  summary += line;
  std::snprintf(line, sizeof(line),
                "wrote %s (averaged over %lld best checkpoints, %lld "
                "parameters)\n",
                ckpt_out.c_str(),
                static_cast<long long>(
                    std::min<int64_t>(tc.keep_best_k, tc.epochs)),
                static_cast<long long>(model.parameter_count()));
  summary += line;
  if (!log_out.empty()) {
    std::snprintf(line, sizeof(line), "wrote %s\n", log_out.c_str());
    summary += line;
  }
  return summary;
}

EvalOutcome eval_run(const cfg::RunConfig& cfg, bool use_memory,
                     const std::string& ckpt_path, const std::string& data_dir,
                     const std::string& baseline_tsv) {
  cfg.validate();
  const data::TaskKind task = cfg.task();
  const int64_t vocab = cfg.task_vocab;
  const int64_t width = train::model_vocab(task, vocab);

  nn::Model<double> model(cfg.model_config(width, use_memory), 1);
  train::restore(model, train::load_checkpoint(ckpt_path));

  const std::pair<const char*, const char*> splits[3] = {
      {"full", "test-full.tsv"},
      {"long", "test-long.tsv"},
      {"very-long", "test-very-long.tsv"},
  };

  EvalOutcome out;
  for (const auto& [name, file] : splits) {
    const std::string path = (fs::path(data_dir) / file).string();
    CNTM_CHECK(fs::exists(path), ErrorKind::kData,
               "missing evaluation split: " + path);
    const data::Corpus corpus = data::read_corpus(path);
    eval::Transcripts refs, hyps;
    for (const data::Utterance& u : corpus) {
      const std::vector<int64_t> input_shifted =
          train::shifted_tokens(data::input_for_target(task, u.tokens, vocab));
      const ag::Array<double> feats = train::one_hot_rows(input_shifted, width);
      std::vector<int64_t> decoded;
      if (cfg.eval_beam <= 1) {
        decoded = nn::model_greedy_decode(model, feats).tokens;
      } else {
        decoded = nn::model_beam_decode(model, feats, cfg.eval_beam)
                      .front()
                      .tokens;
      }
      refs.push_back({u.id, u.tokens});
      hyps.push_back({u.id, unshift(decoded)});
    }
    eval::SplitScore s;
    s.split = name;
    s.report = eval::score(refs, hyps, eval::Unit::kWord);
    out.scores.push_back(std::move(s));
  }

  out.tsv = eval::report_tsv(out.scores);
  std::vector<eval::SplitScore> baseline;
  if (!baseline_tsv.empty()) baseline = parse_report_tsv(slurp(baseline_tsv));
  out.text = render_table(out.scores, baseline);
  return out;
}

std::string report_run(const std::vector<std::string>& tsv_paths,
                       const std::string& baseline_tsv) {
  CNTM_CHECK(!tsv_paths.empty(), ErrorKind::kUsage,
             "report needs at least one input TSV");
  std::vector<eval::SplitScore> baseline;
  if (!baseline_tsv.empty()) baseline = parse_report_tsv(slurp(baseline_tsv));
  std::string out;
  for (const std::string& path : tsv_paths) {
    out += path + "\n";
    out += render_table(parse_report_tsv(slurp(path)), baseline);
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::vector<eval::SplitScore> parse_report_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CNTM_CHECK(std::getline(in, line), ErrorKind::kData, "empty report TSV");
  CNTM_CHECK(line.rfind("split\twer\tcer\t", 0) == 0, ErrorKind::kData,
             "not a report TSV (bad header)");
  std::vector<eval::SplitScore> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    eval::SplitScore row;
    std::string field;
    auto next = [&]() -> std::string {
      CNTM_CHECK(std::getline(cells, field, '\t'), ErrorKind::kData,
                 "report TSV row is short: " + line);
      return field;
    };
    row.split = next();
    try {
      row.report.wer = std::stod(next());
      row.report.cer = std::stod(next());
      row.report.substitutions = std::stoll(next());
      row.report.insertions = std::stoll(next());
      row.report.deletions = std::stoll(next());
      row.report.n_ref_units = std::stoll(next());
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kData, "report TSV cell is not numeric: " + line);
    }
    rows.push_back(std::move(row));
  }
  CNTM_CHECK(!rows.empty(), ErrorKind::kData, "report TSV has no rows");
  return rows;
}

int64_t param_count(const cfg::RunConfig& cfg, bool use_memory) {
  const int64_t width = train::model_vocab(cfg.task(), cfg.task_vocab);
  nn::Model<double> model(cfg.model_config(width, use_memory), 1);
  return model.parameter_count();
}

}  // namespace cntm::run
