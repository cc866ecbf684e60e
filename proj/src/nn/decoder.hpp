/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nn/layers.hpp"

// Transformer decoder with teacher forcing for training and greedy or
// length-normalized beam search for inference.
namespace cntm::nn {

struct DecoderConfig {
  int64_t vocab_size = 20;
  int64_t d_model = 64;
  int64_t n_blocks = 2;
  int64_t n_heads = 2;
  int64_t ff_dim = 128;
  int64_t pad = 0;
  int64_t sos = 1;
  int64_t eos = 2;
  int64_t blank = 3;
  int64_t max_target_len = 512;

  void validate() const {
    CNTM_CHECK(vocab_size >= 1 && d_model >= 1 && n_blocks >= 1 && ff_dim >= 1,
               ErrorKind::kConfig, "decoder extents must be positive");
    CNTM_CHECK(n_heads >= 1 && d_model % n_heads == 0, ErrorKind::kConfig,
               "decoder d_model must be divisible by n_heads");
    for (int64_t t : {pad, sos, eos, blank})
      CNTM_CHECK(0 <= t && t < vocab_size, ErrorKind::kConfig,
                 "special tokens must lie within the vocabulary");
    CNTM_CHECK(pad != sos && pad != eos && pad != blank && sos != eos &&
                   sos != blank && eos != blank,
               ErrorKind::kConfig, "special tokens must be distinct");
    CNTM_CHECK(max_target_len >= 1, ErrorKind::kConfig,
               "max target length must be positive");
  }
};

template <class Real>
struct DecoderParams {
  DecoderConfig cfg;
  ag::Parameter<Real> embed;
  std::vector<TransformerBlockParams<Real>> blocks;
  LayerNormParams<Real> final_norm;
  LinearParams<Real> out;

  DecoderParams(const DecoderConfig& c, uint64_t seed,
                const std::string& name)
      : cfg((c.validate(), c)),
        embed(name + ".embed",
              gaussian_init<Real>({c.vocab_size, c.d_model}, c.d_model, seed,
                                  name + ".embed")),
        final_norm(c.d_model, name + ".final_norm"),
        out(c.d_model, c.vocab_size, seed, name + ".out") {
    blocks.reserve(size_t(cfg.n_blocks));
    for (int64_t i = 0; i < cfg.n_blocks; ++i)
      blocks.emplace_back(cfg.d_model, cfg.n_heads, cfg.ff_dim, seed,
                          name + ".block" + std::to_string(i));
  }

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    p.push_back(&embed);
    for (auto& b : blocks) b.collect(p);
    final_norm.collect(p);
    out.collect(p);
  }
};

// Forward over an explicit token prefix (already starting with sos),
// returning per-position vocab logits. Shared by training and search.
template <class Real>
ag::Var<Real> decoder_forward(ag::Graph<Real>& g, DecoderParams<Real>& params,
                              ag::Var<Real> enc_out,
                              const std::vector<int64_t>& ids) {
  const DecoderConfig& cfg = params.cfg;
  CNTM_CHECK(!ids.empty(), ErrorKind::kShape, "decoder needs a nonempty prefix");
  CNTM_CHECK(enc_out.shape().size() == 2 && enc_out.shape()[1] == cfg.d_model,
             ErrorKind::kShape, "decoder cross-attention input must be T x d");
  int64_t L = int64_t(ids.size());
  ag::Var<Real> x = ag::scale(ag::gather_rows(g.param(params.embed), ids),
                              Real(std::sqrt(double(cfg.d_model))));
  x = ag::add(x, g.input(sinusoid_table<Real>(L, cfg.d_model)));
  ag::Var<Real> mask = g.input(causal_mask<Real>(L));
  for (auto& block : params.blocks) x = block.apply(g, x, enc_out, mask);
  return params.out.apply(g, params.final_norm.apply(g, x));
}

// Teacher forcing: the prefix is sos followed by the target, and the logits
// predict the target followed by eos.
template <class Real>
ag::Var<Real> decode_train(ag::Graph<Real>& g, DecoderParams<Real>& params,
                           ag::Var<Real> enc_out,
                           const std::vector<int64_t>& target) {
  const DecoderConfig& cfg = params.cfg;
  CNTM_CHECK(int64_t(target.size()) + 1 <= cfg.max_target_len,
             ErrorKind::kDomain, "target exceeds the configured max length");
  std::vector<int64_t> ids;
  ids.reserve(target.size() + 1);
  ids.push_back(cfg.sos);
  for (int64_t t : target) {
    CNTM_CHECK(t != cfg.sos && t != cfg.eos, ErrorKind::kData,
               "targets must not contain sos or eos");
    ids.push_back(t);
  }
  return decoder_forward(g, params, enc_out, ids);
}

struct DecodeResult {
  std::vector<int64_t> tokens;
  bool truncated = false;
};

inline int64_t max_decode_length(int64_t enc_rows) {
  return 2 * enc_rows + 10;
}

// Log-probabilities of the next token after the given prefix.
template <class Real>
std::vector<Real> next_token_logprobs(DecoderParams<Real>& params,
                                      const ag::Array<Real>& enc_out,
                                      const std::vector<int64_t>& ids) {
  ag::Graph<Real> g(false);
  ag::Var<Real> logits =
      decoder_forward(g, params, g.input(enc_out), ids);
  ag::Var<Real> lp =
      ag::log_softmax(ag::row_of(logits, logits.shape()[0] - 1));
  return lp.value().v;
}

// Ties go to the lowest index.
template <class Real>
int64_t argmax_token(const std::vector<Real>& scores) {
  return int64_t(std::max_element(scores.begin(), scores.end(),
                                  [](Real a, Real b) { return a < b; }) -
                 scores.begin());
}

// Feed the argmax token back until eos or the length cap.
template <class Real>
DecodeResult greedy_decode(DecoderParams<Real>& params,
                           const ag::Array<Real>& enc_out,
                           int64_t max_len = -1) {
  if (max_len < 0) max_len = max_decode_length(enc_out.shape[0]);
  DecodeResult result;
  std::vector<int64_t> ids{params.cfg.sos};
  for (int64_t step = 0; step < max_len; ++step) {
    int64_t tok = argmax_token(next_token_logprobs(params, enc_out, ids));
    if (tok == params.cfg.eos) return result;
    result.tokens.push_back(tok);
    ids.push_back(tok);
  }
  result.truncated = true;
  return result;
}

struct Hypothesis {
  std::vector<int64_t> tokens;   // content, without sos or eos
  double sum_logprob = 0;        // includes the eos emission when finished
  int64_t emitted = 0;           // tokens plus eos when finished
  bool finished = false;
  bool truncated = false;

  double score() const {
    return emitted == 0 ? 0.0 : sum_logprob / double(emitted);
  }
};

// Ties resolve toward the sequence that a lowest-index argmax would emit,
// with the eos emission compared by its numeric id like any other token.
inline bool better_hypothesis_at(const Hypothesis& a, const Hypothesis& b,
                                 int64_t eos) {
  if (a.score() != b.score()) return a.score() > b.score();
  std::vector<int64_t> ka = a.tokens, kb = b.tokens;
  if (a.finished) ka.push_back(eos);
  if (b.finished) kb.push_back(eos);
  return ka < kb;
}

// Length-normalized beam search. Finished candidates compete for beam slots
// alongside live ones and then retire, so a beam of one follows exactly the
// greedy path.
template <class Real>
std::vector<Hypothesis> beam_decode(DecoderParams<Real>& params,
                                    const ag::Array<Real>& enc_out,
                                    int64_t beam_size, int64_t max_len = -1) {
  CNTM_CHECK(beam_size >= 1, ErrorKind::kConfig, "beam size must be >= 1");
  if (max_len < 0) max_len = max_decode_length(enc_out.shape[0]);
  const int64_t eos = params.cfg.eos;

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> done;
  for (int64_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> pool;
    for (const Hypothesis& hyp : live) {
      std::vector<int64_t> ids{params.cfg.sos};
      ids.insert(ids.end(), hyp.tokens.begin(), hyp.tokens.end());
      std::vector<Real> lp = next_token_logprobs(params, enc_out, ids);
      for (size_t tok = 0; tok < lp.size(); ++tok) {
        Hypothesis next = hyp;
        next.sum_logprob += double(lp[tok]);
        next.emitted += 1;
        if (int64_t(tok) == eos)
          next.finished = true;
        else
          next.tokens.push_back(int64_t(tok));
        pool.push_back(std::move(next));
      }
    }
    std::sort(pool.begin(), pool.end(),
              [eos](const Hypothesis& a, const Hypothesis& b) {
                return better_hypothesis_at(a, b, eos);
              });
    if (int64_t(pool.size()) > beam_size) pool.resize(size_t(beam_size));
    live.clear();
    for (Hypothesis& hyp : pool)
      (hyp.finished ? done : live).push_back(std::move(hyp));
  }
  for (Hypothesis& hyp : live) {
    hyp.truncated = true;
    done.push_back(std::move(hyp));
  }
  std::sort(done.begin(), done.end(),
            [eos](const Hypothesis& a, const Hypothesis& b) {
              return better_hypothesis_at(a, b, eos);
            });
  if (int64_t(done.size()) > beam_size) done.resize(size_t(beam_size));
  return done;
}

}  // namespace cntm::nn
