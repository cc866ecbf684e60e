/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "ag/gradcheck.hpp"
#include "ag/ops.hpp"
#include "common/rng.hpp"
#include "nn/losses.hpp"
#include "nn/model.hpp"

using cntm::Error;
using cntm::ErrorKind;
using cntm::Rng;
using cntm::ag::Array;
using cntm::ag::Graph;
using cntm::ag::Parameter;
using cntm::ag::Var;
namespace ops = cntm::ag;
namespace nn = cntm::nn;

namespace {

using A = Array<double>;
using G = Graph<double>;
using P = Parameter<double>;
using V = Var<double>;

A random_matrix(Rng& rng, int64_t r, int64_t c, double lo = -1.0,
                double hi = 1.0) {
  A a({r, c});
  for (double& x : a.v) x = rng.uniform_real(lo, hi);
  return a;
}

V wsum(G& g, V y, uint64_t salt) {
  A w;
  w.shape = y.shape();
  w.v.resize(y.value().v.size());
  Rng wrng(salt ^ (uint64_t(w.v.size()) << 32), "test/model-weights");
  for (double& x : w.v) x = wrng.uniform_real(-1.0, 1.0);
  return ops::sum_all(ops::mul(y, g.input(std::move(w))));
}

nn::EncoderConfig enc_cfg(int64_t in, int64_t d, int64_t blocks, int64_t heads,
                          int64_t ff, int64_t kernel, bool sub) {
  nn::EncoderConfig c;
  c.input_dim = in;
  c.d_model = d;
  c.n_blocks = blocks;
  c.n_heads = heads;
  c.ff_dim = ff;
  c.conv_kernel = kernel;
  c.subsample = sub;
  return c;
}

nn::DecoderConfig dec_cfg(int64_t vocab, int64_t d, int64_t blocks,
                          int64_t heads, int64_t ff) {
  nn::DecoderConfig c;
  c.vocab_size = vocab;
  c.d_model = d;
  c.n_blocks = blocks;
  c.n_heads = heads;
  c.ff_dim = ff;
  return c;
}

nn::ModelConfig toy_model_cfg() {
  nn::ModelConfig c;
  c.encoder = enc_cfg(5, 8, 1, 2, 16, 3, false);
  c.decoder = dec_cfg(5, 8, 1, 2, 16);
  c.bridge.d_model = 8;
  c.bridge.mem.rows = 8;
  c.bridge.mem.cols = 4;
  return c;
}

std::vector<uint64_t> bits_of(const std::vector<double>& v) {
  std::vector<uint64_t> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(std::bit_cast<uint64_t>(x));
  return out;
}

}  // namespace

TEST_CASE("subsampled length follows the double-stride formula") {
  CHECK(nn::subsampled_length(11) == 2);
  CHECK(nn::subsampled_length(7) == 1);
  for (int64_t T = 7; T <= 200; ++T) {
    // two unpadded stride-2 kernel-3 passes, counted directly
    int64_t first = (T - 3) / 2 + 1;
    int64_t second = (first - 3) / 2 + 1;
    CHECK(nn::subsampled_length(T) == second);
    CHECK(nn::subsampled_length(T) == ((T - 1) / 2 - 1) / 2);
  }
  CHECK_THROWS_AS(nn::subsampled_length(6), Error);
}

TEST_CASE("encoder and decoder produce the documented shapes") {
  Rng rng(311, "test/model-shapes");
  for (int trial = 0; trial < 50; ++trial) {
    int64_t heads = int64_t(1) << rng.uniform_int(0, 2);
    int64_t d = heads * rng.uniform_int(2, 4);
    bool sub = rng.uniform_int(0, 1) == 1;
    nn::EncoderConfig cfg =
        enc_cfg(rng.uniform_int(2, 6), d, rng.uniform_int(1, 2), heads,
                rng.uniform_int(4, 16), 2 * rng.uniform_int(0, 2) + 1, sub);
    nn::EncoderParams<double> params(cfg, 400 + uint64_t(trial), "enc");
    int64_t T = sub ? rng.uniform_int(7, 40) : rng.uniform_int(1, 16);
    G g(false);
    V out = nn::encode(g, params, g.input(random_matrix(rng, T, cfg.input_dim)));
    int64_t expect = sub ? nn::subsampled_length(T) : T;
    CHECK(out.shape() == std::vector<int64_t>{expect, d});
    for (double x : out.value().v) CHECK(std::isfinite(x));
  }
  for (int trial = 0; trial < 50; ++trial) {
    int64_t heads = int64_t(1) << rng.uniform_int(0, 2);
    int64_t d = heads * rng.uniform_int(2, 4);
    int64_t vocab = rng.uniform_int(5, 24);
    nn::DecoderConfig cfg = dec_cfg(vocab, d, rng.uniform_int(1, 2), heads,
                                    rng.uniform_int(4, 16));
    nn::DecoderParams<double> params(cfg, 500 + uint64_t(trial), "dec");
    std::vector<int64_t> y;
    for (int64_t i = rng.uniform_int(0, 6); i > 0; --i)
      y.push_back(rng.uniform_int(4, vocab - 1));
    G g(false);
    V enc_out = g.input(random_matrix(rng, rng.uniform_int(1, 8), d));
    V logits = nn::decode_train(g, params, enc_out, y);
    CHECK(logits.shape() == std::vector<int64_t>{int64_t(y.size()) + 1, vocab});
  }
}

TEST_CASE("shuffling input frames changes the encoder output") {
  Rng rng(313, "test/model-perm");
  nn::EncoderConfig cfg = enc_cfg(4, 8, 1, 2, 16, 3, false);
  nn::EncoderParams<double> params(cfg, 317, "enc");
  A x = random_matrix(rng, 6, 4);
  A shuffled = x;
  for (int64_t c = 0; c < 4; ++c)
    std::swap(shuffled.at(0, c), shuffled.at(1, c));

  auto run = [&](const A& input) {
    G g(false);
    return nn::encode(g, params, g.input(input)).value().v;
  };
  auto a = run(x), b = run(shuffled);
  double diff = 0;
  for (size_t i = 0; i < a.size(); ++i) diff += std::fabs(a[i] - b[i]);
  CHECK(diff > 1e-9);
}

TEST_CASE("encoder rejects mismatched input width") {
  nn::EncoderConfig cfg = enc_cfg(4, 8, 1, 2, 16, 3, false);
  nn::EncoderParams<double> params(cfg, 331, "enc");
  G g;
  try {
    nn::encode(g, params, g.input(A({5, 3}, 0.1)));
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
}

TEST_CASE("one-block encoder passes the finite-difference check") {
  Rng rng(337, "test/model-encgrad");
  nn::EncoderConfig cfg = enc_cfg(5, 8, 1, 2, 16, 3, false);
  nn::EncoderParams<double> params(cfg, 347, "enc");
  P x("x", random_matrix(rng, 6, 5));
  std::vector<P*> ptrs{&x};
  params.collect(ptrs);

  auto run = [&](bool with_grad) -> double {
    G g(with_grad);
    V out = nn::encode(g, params, g.param(x));
    V loss = wsum(g, out, 21);
    if (with_grad) g.backward(loss);
    return loss.value().v[0];
  };
  auto rep = cntm::ag::grad_check<double>(ptrs, run);
  INFO(rep.summary());
  CHECK(rep.ok());
}

TEST_CASE("subsampling frontend passes the finite-difference check") {
  Rng rng(349, "test/model-subgrad");
  nn::EncoderConfig cfg = enc_cfg(4, 6, 1, 2, 8, 3, true);
  nn::EncoderParams<double> params(cfg, 353, "enc");
  P x("x", random_matrix(rng, 11, 4));
  std::vector<P*> ptrs{&x, &params.conv1->w, &params.conv1->b,
                       &params.conv2->w, &params.conv2->b, &params.proj.w,
                       &params.proj.b};

  auto run = [&](bool with_grad) -> double {
    G g(with_grad);
    V out = nn::subsample(g, params, g.param(x));
    V loss = wsum(g, out, 22);
    if (with_grad) g.backward(loss);
    return loss.value().v[0];
  };
  auto rep = cntm::ag::grad_check<double>(ptrs, run);
  INFO(rep.summary());
  CHECK(rep.ok());
  CHECK_THROWS_AS(([&] {
                    G g(false);
                    nn::subsample(g, params, g.input(A({6, 4}, 0.1)));
                  }()),
                  Error);
}

TEST_CASE("decoder logits at a position ignore later target tokens") {
  Rng rng(359, "test/model-causal");
  nn::DecoderConfig cfg = dec_cfg(8, 8, 2, 2, 16);
  nn::DecoderParams<double> params(cfg, 367, "dec");
  A enc_out = random_matrix(rng, 4, 8);
  std::vector<int64_t> y{4, 5, 6, 7, 4};

  auto rows_upto = [&](const std::vector<int64_t>& target, int64_t last) {
    G g(false);
    V logits = nn::decode_train(g, params, g.input(enc_out), target);
    std::vector<double> vals;
    for (int64_t i = 0; i <= last; ++i)
      for (int64_t v = 0; v < 8; ++v) vals.push_back(logits.value().at(i, v));
    return bits_of(vals);
  };

  for (size_t j = 1; j < y.size(); ++j) {
    std::vector<int64_t> altered = y;
    altered[j] = altered[j] == 4 ? 7 : 4;
    // positions up to j use only sos and y_0..y_{j-1}
    CHECK(rows_upto(y, int64_t(j)) == rows_upto(altered, int64_t(j)));
  }
}

TEST_CASE("decoder validates targets") {
  nn::DecoderConfig cfg = dec_cfg(8, 8, 1, 2, 16);
  cfg.max_target_len = 4;
  nn::DecoderParams<double> params(cfg, 373, "dec");
  G g;
  Rng rng(379, "test/model-valid");
  V enc_out = g.input(random_matrix(rng, 3, 8));

  auto kind = [&](const std::vector<int64_t>& y) {
    try {
      nn::decode_train(g, params, enc_out, y);
    } catch (const Error& e) {
      return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::kUsage;
  };
  CHECK(kind({4, 5, 6, 7}) == ErrorKind::kDomain);  // needs 5 > max 4
  CHECK(kind({4, cfg.sos}) == ErrorKind::kData);
  CHECK(kind({cfg.eos}) == ErrorKind::kData);
}

TEST_CASE("one-block decoder passes the finite-difference check") {
  Rng rng(383, "test/model-decgrad");
  nn::DecoderConfig cfg = dec_cfg(6, 8, 1, 2, 16);
  nn::DecoderParams<double> params(cfg, 389, "dec");
  P enc_out("enc_out", random_matrix(rng, 3, 8));
  std::vector<P*> ptrs{&enc_out};
  params.collect(ptrs);
  std::vector<int64_t> y{4, 5};

  auto run = [&](bool with_grad) -> double {
    G g(with_grad);
    V logits = nn::decode_train(g, params, g.param(enc_out), y);
    V loss = wsum(g, logits, 23);
    if (with_grad) g.backward(loss);
    return loss.value().v[0];
  };
  auto rep = cntm::ag::grad_check<double>(ptrs, run);
  INFO(rep.summary());
  CHECK(rep.ok());
}

TEST_CASE("greedy decoding follows forced logit preferences") {
  Rng rng(397, "test/model-greedy");
  nn::DecoderConfig cfg = dec_cfg(6, 8, 1, 2, 16);
  nn::DecoderParams<double> params(cfg, 401, "dec");
  A enc_out = random_matrix(rng, 3, 8);

  // a large output bias makes the choice unconditional
  params.out.b.value.v[size_t(cfg.eos)] = 50.0;
  nn::DecodeResult forced = nn::greedy_decode(params, enc_out);
  CHECK(forced.tokens.empty());
  CHECK_FALSE(forced.truncated);

  params.out.b.value.v[size_t(cfg.eos)] = -50.0;
  nn::DecodeResult capped = nn::greedy_decode(params, enc_out);
  CHECK(capped.truncated);
  CHECK(int64_t(capped.tokens.size()) == nn::max_decode_length(3));

  nn::DecodeResult a = nn::greedy_decode(params, enc_out, 4);
  nn::DecodeResult b = nn::greedy_decode(params, enc_out, 4);
  CHECK(a.tokens == b.tokens);
  CHECK(int64_t(a.tokens.size()) == 4);
}

TEST_CASE("a beam of one follows the greedy path exactly") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(600 + seed, "test/model-beam1");
    nn::DecoderConfig cfg = dec_cfg(7, 8, 1, 2, 16);
    nn::DecoderParams<double> params(cfg, 610 + seed, "dec");
    A enc_out = random_matrix(rng, 2, 8);

    nn::DecodeResult greedy = nn::greedy_decode(params, enc_out, 6);
    std::vector<nn::Hypothesis> beam = nn::beam_decode(params, enc_out, 1, 6);
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == greedy.tokens);
    CHECK(beam[0].truncated == greedy.truncated);
  }
}

TEST_CASE("beam search rejects an empty beam and sorts hypotheses") {
  Rng rng(421, "test/model-beamsort");
  nn::DecoderConfig cfg = dec_cfg(7, 8, 1, 2, 16);
  nn::DecoderParams<double> params(cfg, 431, "dec");
  A enc_out = random_matrix(rng, 2, 8);

  CHECK_THROWS_AS(nn::beam_decode(params, enc_out, 0), Error);
  std::vector<nn::Hypothesis> hyps = nn::beam_decode(params, enc_out, 5, 5);
  REQUIRE(!hyps.empty());
  for (size_t i = 1; i < hyps.size(); ++i)
    CHECK(hyps[i - 1].score() >= hyps[i].score());
}

TEST_CASE("a wide beam reproduces exhaustive enumeration") {
  Rng rng(433, "test/model-beamfull");
  nn::DecoderConfig cfg = dec_cfg(6, 8, 1, 2, 16);
  nn::DecoderParams<double> params(cfg, 439, "dec");
  A enc_out = random_matrix(rng, 2, 8);
  const int64_t max_len = 2;

  // Brute force: every finished sequence needs content plus eos within the
  // step budget; exactly max_len content tokens means truncation instead.
  std::vector<nn::Hypothesis> all;
  std::vector<std::vector<int64_t>> contents{{}};
  for (int64_t len = 1; len <= max_len; ++len) {
    size_t start = contents.size();
    for (size_t i = 0; i < contents.size(); ++i)
      if (int64_t(contents[i].size()) == len - 1)
        for (int64_t t = 0; t < cfg.vocab_size; ++t)
          if (t != cfg.eos) {
            auto c = contents[i];
            c.push_back(t);
            contents.push_back(std::move(c));
          }
    (void)start;
  }
  for (const auto& content : contents) {
    double sum = 0;
    std::vector<int64_t> ids{cfg.sos};
    bool ok = true;
    for (int64_t t : content) {
      std::vector<double> lp = nn::next_token_logprobs(params, enc_out, ids);
      sum += lp[size_t(t)];
      ids.push_back(t);
      (void)ok;
    }
    if (int64_t(content.size()) < max_len) {
      std::vector<double> lp = nn::next_token_logprobs(params, enc_out, ids);
      nn::Hypothesis h;
      h.tokens = content;
      h.sum_logprob = sum + lp[size_t(cfg.eos)];
      h.emitted = int64_t(content.size()) + 1;
      h.finished = true;
      all.push_back(std::move(h));
    } else {
      nn::Hypothesis h;
      h.tokens = content;
      h.sum_logprob = sum;
      h.emitted = int64_t(content.size());
      h.truncated = true;
      all.push_back(std::move(h));
    }
  }
  std::sort(all.begin(), all.end(),
            [&](const nn::Hypothesis& a, const nn::Hypothesis& b) {
              return nn::better_hypothesis_at(a, b, cfg.eos);
            });

  std::vector<nn::Hypothesis> beam =
      nn::beam_decode(params, enc_out, 64, max_len);
  REQUIRE(beam.size() == all.size());
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(beam[i].tokens == all[i].tokens);
    CHECK(beam[i].finished == all[i].finished);
    CHECK(beam[i].truncated == all[i].truncated);
    CHECK(beam[i].score() == doctest::Approx(all[i].score()).epsilon(1e-12));
  }
}

TEST_CASE("the assembled model wires encoder, memory, and heads together") {
  nn::ModelConfig cfg = toy_model_cfg();
  nn::Model<double> with_memory(cfg, 41);
  nn::ModelConfig plain_cfg = cfg;
  plain_cfg.use_memory = false;
  nn::Model<double> plain(plain_cfg, 41);

  CHECK(with_memory.parameter_count() > plain.parameter_count());
  CHECK(with_memory.fingerprint() != plain.fingerprint());
  CHECK(nn::Model<double>(cfg, 99).fingerprint() == with_memory.fingerprint());

  nn::ModelConfig wider = cfg;
  wider.encoder.d_model = 16;
  wider.decoder.d_model = 16;
  wider.bridge.d_model = 16;
  CHECK(nn::Model<double>(wider, 41).fingerprint() !=
        with_memory.fingerprint());

  Rng rng(443, "test/model-assembled");
  A x = random_matrix(rng, 6, 5);
  G g(false);
  CHECK(with_memory.encode_sequence(g, g.input(x)).shape() ==
        std::vector<int64_t>{6, 8});
  V o = plain.encode_sequence(g, g.input(x));
  CHECK(o.shape() == std::vector<int64_t>{6, 8});
  CHECK(plain.ctc_logits(g, o).shape() == std::vector<int64_t>{6, 5});
}

TEST_CASE("assembled-model logits stay causal in the target") {
  nn::ModelConfig cfg = toy_model_cfg();
  cfg.decoder.vocab_size = 6;
  nn::Model<double> model(cfg, 47);
  Rng rng(449, "test/model-jointcausal");
  A x = random_matrix(rng, 5, 5);
  std::vector<int64_t> y{4, 5, 4, 5};

  auto rows_upto = [&](const std::vector<int64_t>& target, int64_t last) {
    G g(false);
    V o = model.encode_sequence(g, g.input(x));
    V logits = nn::decode_train(g, model.decoder, o, target);
    std::vector<double> vals;
    for (int64_t i = 0; i <= last; ++i)
      for (int64_t v = 0; v < 6; ++v) vals.push_back(logits.value().at(i, v));
    return bits_of(vals);
  };
  for (size_t j = 1; j < y.size(); ++j) {
    std::vector<int64_t> altered = y;
    altered[j] = altered[j] == 4 ? 5 : 4;
    CHECK(rows_upto(y, int64_t(j)) == rows_upto(altered, int64_t(j)));
  }
}

TEST_CASE("the full model passes the finite-difference check") {
  nn::ModelConfig cfg = toy_model_cfg();
  // Run the check from a conditioned memory state: the constant seed sits
  // where cosine addressing is too flat for finite differences to resolve.
  cfg.bridge.mem.init_scheme = cntm::ntm::InitScheme::kLearned;
  nn::Model<double> model(cfg, 53);
  Rng rng(457, "test/model-e2e");
  for (double& v : model.bridge->mem0.value.v) v = rng.uniform_real(-1, 1);
  for (auto& w : model.bridge->w0)
    for (double& v : w.value.v) v = rng.uniform_real(-1, 1);
  P x("x", random_matrix(rng, 8, 5));
  std::vector<P*> ptrs{&x};
  model.collect(ptrs);
  std::vector<int64_t> y{4, 4};
  std::vector<int64_t> y_out{4, 4, cfg.decoder.eos};

  auto run = [&](bool with_grad) -> double {
    G g(with_grad);
    V o = model.encode_sequence(g, g.param(x));
    V att = nn::attention_loss(
        g, nn::decode_train(g, model.decoder, o, y), y_out, 0.1);
    V ctc = nn::ctc_loss(g, model.ctc_logits(g, o), y, cfg.decoder.blank);
    V loss = nn::joint_loss(att, ctc, 0.3);
    if (with_grad) g.backward(loss);
    return loss.value().v[0];
  };
  // A wider step keeps cancellation noise below the smallest real gradients
  // in this deep composition; truncation stays orders below the tolerance.
  cntm::ag::GradCheckOptions opt;
  opt.epsilon = 1e-4;
  auto rep = cntm::ag::grad_check<double>(ptrs, run, opt);
  INFO(rep.summary());
  CHECK(rep.ok());
}
