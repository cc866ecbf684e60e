/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#ifndef CNTM_RUN_DRIVER_HPP_
#define CNTM_RUN_DRIVER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cfg/config.hpp"
#include "eval/scoring.hpp"

namespace cntm::run {

// Names of the files gen_bench writes into its output directory.
// train/dev at task lengths, an in-distribution test split, a long split
// (durations 16..24) and a very-long split built by concatenating chained
// segments (durations 25..64 for the copy task).
extern const char* const kBenchFiles[5];

// Writes the five-way benchmark layout; returns a human-readable summary.
// Byte-deterministic given (cfg, seed).
std::string gen_bench(const cfg::RunConfig& cfg, uint64_t seed,
                      const std::string& out_dir);

// Writes one corpus file shaped by a split rule: "full", "longest-k", or
// "concat-longest-k" (chain, merge, then keep the k longest).
std::string gen_split(const cfg::RunConfig& cfg, uint64_t seed,
                      const std::string& out_path, const std::string& split,
                      int64_t k);

// Trains a fresh model on the given corpora, writing the averaged-best
// checkpoint and an append-only metrics log. The seed drives both the
// initialization and the shuffling. Returns a summary.
std::string train_run(const cfg::RunConfig& cfg, bool use_memory,
                      uint64_t seed, const std::string& train_path,
                      const std::string& dev_path, const std::string& ckpt_out,
                      const std::string& log_out);

struct EvalOutcome {
  std::string tsv;   // machine-readable per-split table
  std::string text;  // rendered table, with baseline deltas when given
  std::vector<eval::SplitScore> scores;
};

// Decodes the three test splits found in data_dir with the checkpointed
// model and scores them. A nonempty baseline path must name a report TSV
// from a previous eval; relative WER reductions against it are added.
EvalOutcome eval_run(const cfg::RunConfig& cfg, bool use_memory,
                     const std::string& ckpt_path, const std::string& data_dir,
                     const std::string& baseline_tsv);

// Renders saved report TSVs (one block per file), with reductions against an
// optional baseline report.
std::string report_run(const std::vector<std::string>& tsv_paths,
                       const std::string& baseline_tsv);

// Parses report_tsv output back into split scores (used for baselines).
std::vector<eval::SplitScore> parse_report_tsv(const std::string& text);

// Parameter count of the model this config would train.
int64_t param_count(const cfg::RunConfig& cfg, bool use_memory);

}  // namespace cntm::run

#endif  // CNTM_RUN_DRIVER_HPP_
