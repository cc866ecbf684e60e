/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ag/array.hpp"

namespace cntm::data {

// One corpus item. Tokens are the target sequence over the raw task alphabet
// [0, vocab_size); the special model tokens (pad/sos/eos/blank) are grafted on
// later by the training pipeline, never stored in corpora. Duration counts
// tokens, or frames once a feature matrix is attached.
struct Utterance {
  std::string id;
  std::vector<int64_t> tokens;
  std::optional<ag::Array<double>> features;  // T x input_dim when present
  double duration = 0.0;
  std::string predecessor;  // id of the preceding segment; empty if unchained
};

using Corpus = std::vector<Utterance>;

// Inclusive integer range used for lengths, repeat counts and chain sizes.
struct LenRange {
  int64_t lo = 1;
  int64_t hi = 1;
};

enum class TaskKind { kCopy, kRepeatCopy };

// Repeat-copy separates the repeated blocks with one token from outside the
// data alphabet; by convention that is the id `vocab_size` itself.
int64_t separator_token(int64_t vocab_size);

// Recovers the model input from a stored target: the target itself for copy,
// the block before the first separator for repeat-copy.
std::vector<int64_t> input_for_target(TaskKind task,
                                      const std::vector<int64_t>& target,
                                      int64_t vocab_size);

// Synthetic task generators. Both are bit-reproducible from (seed, params):
// utterance i draws from its own named substream of the master seed, so
// generation could be parallelized per item without changing the output.
Corpus gen_copy(uint64_t seed, int64_t count, LenRange len,
                int64_t vocab_size);
Corpus gen_repeat_copy(uint64_t seed, int64_t count, LenRange len,
                       LenRange repeats, int64_t vocab_size);

// Randomly links runs of consecutive utterances into predecessor chains of
// the given size range. This is the synthetic stand-in for the "continuous
// segments" bookkeeping of a real corpus, and feeds concat_segments.
Corpus assign_chains(Corpus corpus, uint64_t seed, LenRange group_size);

// The K utterances of greatest duration, descending, ties broken toward the
// lexicographically smaller id. K must be in [1, |corpus|].
Corpus longest_k(const Corpus& corpus, int64_t k);

// Merges every maximal predecessor chain into a single utterance: tokens are
// concatenated in chain order, durations summed, and the merged item keeps
// the chain head's id. Unchained utterances pass through unchanged.
Corpus concat_segments(const Corpus& corpus);

struct DurationStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

DurationStats duration_stats(const Corpus& corpus);

// Evaluation-split recipe: the full set, its longest K, or the longest K
// after segment concatenation (the "very long" construction).
struct SplitSpec {
  enum class Kind { kFull, kLongestK, kConcatThenLongestK };
  Kind kind = Kind::kFull;
  int64_t k = 1;
};

Corpus apply_split(const Corpus& corpus, const SplitSpec& spec);

// Corpus text format: one utterance per line, tab-separated
//   id <TAB> predecessor-id-or-dash <TAB> space-separated integer tokens
// UTF-8, written in corpus order, so equal corpora give byte-equal files.
void write_corpus(const std::string& path, const Corpus& corpus);
Corpus read_corpus(const std::string& path);

// Feature matrices travel in a companion tensor container keyed by utterance
// id. Attaching features switches the utterance duration to its frame count.
void write_features(const std::string& path, const Corpus& corpus);
void attach_features(const std::string& path, Corpus& corpus);

}  // namespace cntm::data
