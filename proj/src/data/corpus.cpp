/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "data/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "io/container.hpp"

namespace cntm::data {

namespace {

// Distinguishes feature companions from model checkpoints inside the shared
// container format.
const uint64_t kFeatureTag = Rng::fnv1a("cntm/features/v1");

void check_len_range(const LenRange& r, const char* what) {
  CNTM_CHECK(r.lo >= 1 && r.lo <= r.hi, ErrorKind::kDomain,
             std::string(what) + " range must satisfy 1 <= lo <= hi");
}

std::string numbered_id(const char* prefix, int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
  return std::string(prefix) + buf;
}

std::vector<int64_t> random_tokens(Rng& rng, int64_t len, int64_t vocab_size) {
  std::vector<int64_t> toks(static_cast<size_t>(len));
  for (auto& t : toks) t = rng.uniform_int(0, vocab_size - 1);
  return toks;
}

void check_gen_args(int64_t count, const LenRange& len, int64_t vocab_size) {
  CNTM_CHECK(count >= 0, ErrorKind::kDomain, "utterance count must be >= 0");
  check_len_range(len, "length");
  CNTM_CHECK(len.hi <= 512, ErrorKind::kDomain,
             "generated lengths are capped at 512");
  CNTM_CHECK(vocab_size >= 1, ErrorKind::kDomain, "vocab_size must be >= 1");
}

}  // namespace

int64_t separator_token(int64_t vocab_size) { return vocab_size; }

std::vector<int64_t> input_for_target(TaskKind task,
                                      const std::vector<int64_t>& target,
                                      int64_t vocab_size) {
  CNTM_CHECK(!target.empty(), ErrorKind::kData, "empty target sequence");
  if (task == TaskKind::kCopy) return target;
  const int64_t sep = separator_token(vocab_size);
  auto first = std::find(target.begin(), target.end(), sep);
  CNTM_CHECK(first != target.begin(), ErrorKind::kData,
             "repeat-copy target starts with a separator");
  return std::vector<int64_t>(target.begin(), first);
}

Corpus gen_copy(uint64_t seed, int64_t count, LenRange len,
                int64_t vocab_size) {
  check_gen_args(count, len, vocab_size);
  Corpus corpus;
  corpus.reserve(size_t(count));
  for (int64_t i = 0; i < count; ++i) {
    Utterance u;
    u.id = numbered_id("copy-", i);
    Rng rng(seed, "task/copy/" + std::to_string(i));
    const int64_t n = rng.uniform_int(len.lo, len.hi);
    u.tokens = random_tokens(rng, n, vocab_size);
    u.duration = double(n);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

Corpus gen_repeat_copy(uint64_t seed, int64_t count, LenRange len,
                       LenRange repeats, int64_t vocab_size) {
  check_gen_args(count, len, vocab_size);
  check_len_range(repeats, "repeats");
  const int64_t sep = separator_token(vocab_size);
  Corpus corpus;
  corpus.reserve(size_t(count));
  for (int64_t i = 0; i < count; ++i) {
    Utterance u;
    u.id = numbered_id("repeat-", i);
    Rng rng(seed, "task/repeat-copy/" + std::to_string(i));
    const int64_t n = rng.uniform_int(len.lo, len.hi);
    const int64_t r = rng.uniform_int(repeats.lo, repeats.hi);
    const std::vector<int64_t> base = random_tokens(rng, n, vocab_size);
    u.tokens.reserve(size_t(r * n + r - 1));
    for (int64_t rep = 0; rep < r; ++rep) {
      if (rep > 0) u.tokens.push_back(sep);
      u.tokens.insert(u.tokens.end(), base.begin(), base.end());
    }
    u.duration = double(u.tokens.size());
    corpus.push_back(std::move(u));
  }
  return corpus;
}

Corpus assign_chains(Corpus corpus, uint64_t seed, LenRange group_size) {
  check_len_range(group_size, "group size");
  Rng rng(seed, "task/chains");
  size_t i = 0;
  while (i < corpus.size()) {
    const auto g = size_t(rng.uniform_int(group_size.lo, group_size.hi));
    const size_t end = std::min(corpus.size(), i + g);
    corpus[i].predecessor.clear();
    for (size_t j = i + 1; j < end; ++j)
      corpus[j].predecessor = corpus[j - 1].id;
    i = end;
  }
  return corpus;
}

Corpus longest_k(const Corpus& corpus, int64_t k) {
  CNTM_CHECK(k >= 1, ErrorKind::kDomain, "longest-K needs K >= 1");
  CNTM_CHECK(k <= int64_t(corpus.size()), ErrorKind::kDomain,
             "longest-K needs K <= corpus size");
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (corpus[a].duration != corpus[b].duration)
      return corpus[a].duration > corpus[b].duration;
    return corpus[a].id < corpus[b].id;
  });
  Corpus out;
  out.reserve(size_t(k));
  for (int64_t i = 0; i < k; ++i) out.push_back(corpus[order[size_t(i)]]);
  return out;
}

Corpus concat_segments(const Corpus& corpus) {
  std::unordered_map<std::string, size_t> by_id;
  by_id.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    const bool fresh = by_id.emplace(corpus[i].id, i).second;
    CNTM_CHECK(fresh, ErrorKind::kData,
               "duplicate utterance id: " + corpus[i].id);
  }
  // successor[i] = index of the utterance whose predecessor is i, if any.
  std::vector<int64_t> successor(corpus.size(), -1);
  for (size_t i = 0; i < corpus.size(); ++i) {
    const std::string& pred = corpus[i].predecessor;
    if (pred.empty()) continue;
    auto it = by_id.find(pred);
    CNTM_CHECK(it != by_id.end(), ErrorKind::kData,
               "unknown predecessor id: " + pred);
    CNTM_CHECK(successor[it->second] < 0, ErrorKind::kData,
               "segment chain branches at id: " + pred);
    successor[it->second] = int64_t(i);
  }
  Corpus out;
  size_t visited = 0;
  for (size_t head = 0; head < corpus.size(); ++head) {
    if (!corpus[head].predecessor.empty()) continue;  // not a chain head
    Utterance merged;
    merged.id = corpus[head].id;
    bool any_features = false, all_features = true;
    int64_t frames = 0, feat_cols = -1;
    std::vector<double> feat_values;
    for (int64_t at = int64_t(head); at >= 0; at = successor[size_t(at)]) {
      const Utterance& seg = corpus[size_t(at)];
      merged.tokens.insert(merged.tokens.end(), seg.tokens.begin(),
                           seg.tokens.end());
      merged.duration += seg.duration;
      if (seg.features.has_value()) {
        any_features = true;
        const auto& f = *seg.features;
        CNTM_CHECK(feat_cols < 0 || f.shape[1] == feat_cols,
                   ErrorKind::kShape,
                   "feature widths differ along chain at id: " + seg.id);
        feat_cols = f.shape[1];
        frames += f.shape[0];
        feat_values.insert(feat_values.end(), f.v.begin(), f.v.end());
      } else {
        all_features = false;
      }
      ++visited;
    }
    CNTM_CHECK(!any_features || all_features, ErrorKind::kData,
               "chain mixes utterances with and without features at id: " +
                   merged.id);
    if (any_features)
      merged.features = ag::Array<double>::from({frames, feat_cols},
                                                std::move(feat_values));
    out.push_back(std::move(merged));
  }
  CNTM_CHECK(visited == corpus.size(), ErrorKind::kData,
             "cyclic segment chain");
  return out;
}

DurationStats duration_stats(const Corpus& corpus) {
  CNTM_CHECK(!corpus.empty(), ErrorKind::kDomain,
             "duration stats of an empty corpus");
  DurationStats s;
  s.min = s.max = corpus.front().duration;
  double total = 0.0;
  for (const Utterance& u : corpus) {
    total += u.duration;
    s.min = std::min(s.min, u.duration);
    s.max = std::max(s.max, u.duration);
  }
  s.mean = total / double(corpus.size());
  return s;
}

Corpus apply_split(const Corpus& corpus, const SplitSpec& spec) {
  switch (spec.kind) {
    case SplitSpec::Kind::kFull:
      return corpus;
    case SplitSpec::Kind::kLongestK:
      return longest_k(corpus, spec.k);
    case SplitSpec::Kind::kConcatThenLongestK:
      return longest_k(concat_segments(corpus), spec.k);
  }
  throw_domain("unknown split kind");
}

namespace {

void check_field_text(const std::string& s, const char* what) {
  CNTM_CHECK(s.find_first_of("\t\n \r") == std::string::npos,
             ErrorKind::kData,
             std::string(what) + " contains whitespace: " + s);
}

}  // namespace

void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  CNTM_CHECK(out.is_open(), ErrorKind::kData,
             "cannot open for writing: " + path);
  for (const Utterance& u : corpus) {
    CNTM_CHECK(!u.id.empty(), ErrorKind::kData, "utterance with empty id");
    check_field_text(u.id, "utterance id");
    if (!u.predecessor.empty()) check_field_text(u.predecessor, "predecessor");
    CNTM_CHECK(!u.tokens.empty(), ErrorKind::kData,
               "utterance without tokens: " + u.id);
    out << u.id << '\t' << (u.predecessor.empty() ? "-" : u.predecessor)
        << '\t';
    for (size_t i = 0; i < u.tokens.size(); ++i) {
      if (i) out << ' ';
      out << u.tokens[i];
    }
    out << '\n';
  }
  out.flush();
  CNTM_CHECK(bool(out), ErrorKind::kData, "write failed: " + path);
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CNTM_CHECK(in.is_open(), ErrorKind::kData, "cannot open: " + path);
  Corpus corpus;
  std::unordered_map<std::string, size_t> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t tab1 = line.find('\t');
    const size_t tab2 =
        tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    CNTM_CHECK(tab2 != std::string::npos &&
                   line.find('\t', tab2 + 1) == std::string::npos,
               ErrorKind::kData,
               "expected exactly three tab-separated fields at " + where);
    Utterance u;
    u.id = line.substr(0, tab1);
    CNTM_CHECK(!u.id.empty(), ErrorKind::kData, "empty id at " + where);
    const std::string pred = line.substr(tab1 + 1, tab2 - tab1 - 1);
    CNTM_CHECK(!pred.empty(), ErrorKind::kData,
               "empty predecessor field at " + where);
    if (pred != "-") u.predecessor = pred;
    std::istringstream toks(line.substr(tab2 + 1));
    std::string item;
    while (toks >> item) {
      size_t used = 0;
      int64_t value = 0;
      try {
        value = std::stoll(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      CNTM_CHECK(used == item.size() && value >= 0, ErrorKind::kData,
                 "bad token '" + item + "' at " + where);
      u.tokens.push_back(value);
    }
    CNTM_CHECK(!u.tokens.empty(), ErrorKind::kData,
               "utterance without tokens at " + where);
    u.duration = double(u.tokens.size());
    const bool fresh = seen.emplace(u.id, line_no).second;
    CNTM_CHECK(fresh, ErrorKind::kData, "duplicate id '" + u.id + "' at " + where);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

void write_features(const std::string& path, const Corpus& corpus) {
  io::TensorFile file;
  file.fingerprint = kFeatureTag;
  for (const Utterance& u : corpus) {
    if (!u.features.has_value()) continue;
    CNTM_CHECK(u.features->rank() == 2, ErrorKind::kShape,
               "features must be rank 2: " + u.id);
    file.tensors.push_back({u.id, *u.features});
  }
  io::write_tensor_file(path, file);
}

void attach_features(const std::string& path, Corpus& corpus) {
  const io::TensorFile file = io::read_tensor_file(path);
  CNTM_CHECK(file.fingerprint == kFeatureTag, ErrorKind::kData,
             "not a feature companion file: " + path);
  std::unordered_map<std::string, size_t> by_id;
  by_id.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) by_id.emplace(corpus[i].id, i);
  for (const io::NamedTensor& t : file.tensors) {
    auto it = by_id.find(t.name);
    CNTM_CHECK(it != by_id.end(), ErrorKind::kData,
               "feature record for unknown utterance id: " + t.name);
    CNTM_CHECK(t.value.rank() == 2 && t.value.shape[0] >= 1 &&
                   t.value.shape[1] >= 1,
               ErrorKind::kData, "bad feature matrix for id: " + t.name);
    Utterance& u = corpus[it->second];
    u.features = t.value;
    u.duration = double(t.value.shape[0]);
  }
}

}  // namespace cntm::data
