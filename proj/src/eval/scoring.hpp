/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace cntm::eval {

// Counts from one optimal alignment; distance == S + I + D always holds.
// Deletions are reference units the hypothesis dropped, insertions are
// hypothesis units with no reference counterpart.
struct EditCounts {
  int64_t distance = 0;
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
};

// Levenshtein with unit costs over any equality-comparable unit type. Among
// the optimal alignments the substitution-heaviest one is reported: ties
// resolve toward substitution ahead of deletion/insertion pairs. Picking a
// move greedily during a backtrace cannot guarantee that (a locally equal
// branch can strand later substitutions), so a second table tracks the best
// substitution count outright. Deletion and insertion counts then follow
// from the two conservation laws D - I = |ref| - |hyp| and S + D + I =
// distance, which also makes the counts symmetric: swapping the arguments
// preserves S and swaps I with D.
template <class Unit>
EditCounts edit_distance_units(const std::vector<Unit>& ref,
                               const std::vector<Unit>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<int64_t> d((n + 1) * (m + 1));
  std::vector<int64_t> s((n + 1) * (m + 1));
  const auto dist = [&](size_t i, size_t j) -> int64_t& {
    return d[i * (m + 1) + j];
  };
  const auto subs = [&](size_t i, size_t j) -> int64_t& {
    return s[i * (m + 1) + j];
  };
  for (size_t i = 0; i <= n; ++i) dist(i, 0) = int64_t(i);
  for (size_t j = 0; j <= m; ++j) dist(0, j) = int64_t(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t diag_cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      const int64_t via_diag = dist(i - 1, j - 1) + diag_cost;
      const int64_t via_del = dist(i - 1, j) + 1;
      const int64_t via_ins = dist(i, j - 1) + 1;
      const int64_t best = std::min(via_diag, std::min(via_del, via_ins));
      dist(i, j) = best;
      int64_t best_subs = -1;
      if (via_diag == best)
        best_subs = std::max(best_subs, subs(i - 1, j - 1) + diag_cost);
      if (via_del == best) best_subs = std::max(best_subs, subs(i - 1, j));
      if (via_ins == best) best_subs = std::max(best_subs, subs(i, j - 1));
      subs(i, j) = best_subs;
    }
  }
  EditCounts c;
  c.distance = dist(n, m);
  c.substitutions = subs(n, m);
  c.deletions = (c.distance - c.substitutions + int64_t(n) - int64_t(m)) / 2;
  c.insertions = c.distance - c.substitutions - c.deletions;
  return c;
}

EditCounts edit_distance(const std::vector<int64_t>& ref,
                         const std::vector<int64_t>& hyp);

// One decoded utterance paired with its corpus id for scoring.
struct Transcript {
  std::string id;
  std::vector<int64_t> tokens;
};

using Transcripts = std::vector<Transcript>;

enum class Unit { kWord, kChar };

// Corpus-level pooled scores. Both rates are always filled in; the count
// fields describe the requested unit (words: one token per unit; chars:
// characters of the space-joined decimal rendering of the tokens).
struct ScoreReport {
  double wer = 0.0;
  double cer = 0.0;
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t n_ref_units = 0;
};

ScoreReport score(const Transcripts& refs, const Transcripts& hyps, Unit unit);

// 100 * (baseline - system) / baseline, the headline improvement number.
double relative_reduction(double baseline, double system);

// Table cell in the conventional "WER (CER)" style, one decimal each.
std::string format_wer_cer(double wer, double cer);

// Score of one evaluation split for report emission.
struct SplitScore {
  std::string split;
  ScoreReport report;
};

// Tab-separated table (header + one row per split) and a flat
// `split.key = value` text form for downstream tooling.
std::string report_tsv(const std::vector<SplitScore>& rows);
std::string report_text(const std::vector<SplitScore>& rows);

}  // namespace cntm::eval
