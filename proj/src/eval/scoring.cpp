/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "eval/scoring.hpp"

#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace cntm::eval {

namespace {

// Character units for CER: the decimal rendering of the token sequence,
// space-joined, one unit per character including the spaces.
std::vector<char> char_units(const std::vector<int64_t>& tokens) {
  std::string text;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += std::to_string(tokens[i]);
  }
  return std::vector<char>(text.begin(), text.end());
}

struct PooledCounts {
  EditCounts counts;
  int64_t n_ref_units = 0;
};

template <class Extract>
PooledCounts pool(const Transcripts& refs, const Transcripts& hyps,
                  const std::unordered_map<std::string, size_t>& hyp_index,
                  Extract&& extract) {
  PooledCounts pooled;
  for (const Transcript& ref : refs) {
    const Transcript& hyp = hyps[hyp_index.at(ref.id)];
    const auto ref_units = extract(ref.tokens);
    const auto hyp_units = extract(hyp.tokens);
    const EditCounts c = edit_distance_units(ref_units, hyp_units);
    pooled.counts.distance += c.distance;
    pooled.counts.substitutions += c.substitutions;
    pooled.counts.insertions += c.insertions;
    pooled.counts.deletions += c.deletions;
    pooled.n_ref_units += int64_t(ref_units.size());
  }
  return pooled;
}

double error_rate(const PooledCounts& pooled) {
  CNTM_CHECK(pooled.n_ref_units > 0, ErrorKind::kDomain,
             "scoring needs at least one reference unit");
  return 100.0 * double(pooled.counts.distance) / double(pooled.n_ref_units);
}

}  // namespace

EditCounts edit_distance(const std::vector<int64_t>& ref,
                         const std::vector<int64_t>& hyp) {
  return edit_distance_units(ref, hyp);
}

ScoreReport score(const Transcripts& refs, const Transcripts& hyps,
                  Unit unit) {
  CNTM_CHECK(refs.size() == hyps.size(), ErrorKind::kData,
             "reference and hypothesis counts differ");
  CNTM_CHECK(!refs.empty(), ErrorKind::kDomain, "nothing to score");
  std::unordered_map<std::string, size_t> hyp_index;
  hyp_index.reserve(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    const bool fresh = hyp_index.emplace(hyps[i].id, i).second;
    CNTM_CHECK(fresh, ErrorKind::kData,
               "duplicate hypothesis id: " + hyps[i].id);
  }
  for (const Transcript& ref : refs)
    CNTM_CHECK(hyp_index.count(ref.id), ErrorKind::kData,
               "no hypothesis for id: " + ref.id);

  const PooledCounts words = pool(
      refs, hyps, hyp_index,
      [](const std::vector<int64_t>& toks) { return toks; });
  const PooledCounts chars = pool(
      refs, hyps, hyp_index,
      [](const std::vector<int64_t>& toks) { return char_units(toks); });

  ScoreReport report;
  report.wer = error_rate(words);
  report.cer = error_rate(chars);
  const PooledCounts& reported = unit == Unit::kWord ? words : chars;
  report.substitutions = reported.counts.substitutions;
  report.insertions = reported.counts.insertions;
  report.deletions = reported.counts.deletions;
  report.n_ref_units = reported.n_ref_units;
  return report;
}

double relative_reduction(double baseline, double system) {
  CNTM_CHECK(baseline > 0.0, ErrorKind::kDomain,
             "relative reduction needs a positive baseline");
  return 100.0 * (baseline - system) / baseline;
}

std::string format_wer_cer(double wer, double cer) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f (%.1f)", wer, cer);
  return std::string(buf);
}

std::string report_tsv(const std::vector<SplitScore>& rows) {
  std::ostringstream out;
  out << "split\twer\tcer\tsub\tins\tdel\tref_units\n";
  for (const SplitScore& row : rows) {
    char rates[64];
    std::snprintf(rates, sizeof(rates), "%.1f\t%.1f", row.report.wer,
                  row.report.cer);
    out << row.split << '\t' << rates << '\t' << row.report.substitutions
        << '\t' << row.report.insertions << '\t' << row.report.deletions
        << '\t' << row.report.n_ref_units << '\n';
  }
  return out.str();
}

std::string report_text(const std::vector<SplitScore>& rows) {
  std::ostringstream out;
  for (const SplitScore& row : rows) {
    char rates[96];
    std::snprintf(rates, sizeof(rates),
                  "%s.wer = %.1f\n%s.cer = %.1f\n", row.split.c_str(),
                  row.report.wer, row.split.c_str(), row.report.cer);
    out << rates;
    out << row.split << ".substitutions = " << row.report.substitutions
        << '\n';
    out << row.split << ".insertions = " << row.report.insertions << '\n';
    out << row.split << ".deletions = " << row.report.deletions << '\n';
    out << row.split << ".ref_units = " << row.report.n_ref_units << '\n';
  }
  return out.str();
}

}  // namespace cntm::eval
