/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "data/corpus.hpp"
#include "nn/model.hpp"
#include "train/trainer.hpp"

using cntm::Error;
using cntm::ErrorKind;
using cntm::Rng;
using cntm::data::Corpus;
using cntm::data::TaskKind;
using cntm::train::AdamState;
using cntm::train::Checkpoint;
using cntm::train::TrainConfig;
namespace nn = cntm::nn;
namespace train = cntm::train;

namespace {

using A = cntm::ag::Array<double>;
using P = cntm::ag::Parameter<double>;

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kUsage;
}

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cntm_trainer";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

bool same_bits(const A& a, const A& b) {
  return a.shape == b.shape &&
         std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) == 0;
}

// Toy copy-task model: data vocab 4 plus the special ids gives width 8.
nn::ModelConfig toy_cfg(int64_t vocab_width) {
  nn::ModelConfig c;
  c.encoder.input_dim = vocab_width;
  c.encoder.d_model = 8;
  c.encoder.n_blocks = 1;
  c.encoder.n_heads = 2;
  c.encoder.ff_dim = 16;
  c.encoder.conv_kernel = 3;
  c.encoder.subsample = false;
  c.decoder.vocab_size = vocab_width;
  c.decoder.d_model = 8;
  c.decoder.n_blocks = 1;
  c.decoder.n_heads = 2;
  c.decoder.ff_dim = 16;
  c.bridge.d_model = 8;
  c.bridge.mem.rows = 8;
  c.bridge.mem.cols = 4;
  return c;
}

TrainConfig quick_train_cfg() {
  TrainConfig cfg;
  cfg.peak_lr = 1e-3;
  cfg.warmup_steps = 8;
  cfg.epochs = 1;
  cfg.batch_bins = 16;
  cfg.keep_best_k = 3;
  cfg.seed = 7;
  cfg.dump_path = tmp_path("diverged.cntm");
  return cfg;
}

Checkpoint tiny_ckpt(uint64_t fp, int64_t step, double dev, double fill) {
  Checkpoint c;
  c.fingerprint = fp;
  c.step = step;
  c.dev_score = dev;
  c.tensors.push_back({"w", A::full({2, 2}, fill)});
  c.tensors.push_back({"b", A::full({3}, fill * 2.0)});
  return c;
}

}  // namespace

TEST_CASE("learning rate schedule hits its anchors exactly") {
  const double peak = 0.002;
  const int64_t warmup = 15000;
  CHECK(train::lr_at(warmup, peak, warmup) == peak);
  CHECK(train::lr_at(warmup / 4, peak, warmup) == peak / 4.0);
  CHECK(train::lr_at(4 * warmup, peak, warmup) == peak / 2.0);

  CHECK(kind_of([&] { train::lr_at(0, peak, warmup); }) == ErrorKind::kDomain);

  // Ramp is increasing, decay is decreasing, and the two branches meet.
  for (int64_t s = 1; s < 64; ++s)
    CHECK(train::lr_at(s, peak, 64) < train::lr_at(s + 1, peak, 64));
  for (int64_t s = 64; s < 256; ++s)
    CHECK(train::lr_at(s, peak, 64) > train::lr_at(s + 1, peak, 64));
  CHECK(train::lr_at(63, peak, 64) < train::lr_at(64, peak, 64));
  CHECK(train::lr_at(65, peak, 64) < train::lr_at(64, peak, 64));
}

TEST_CASE("adam leaves parameters alone at zero gradient and zero decay") {
  P w("w", A::full({2, 3}, 1.25));
  std::vector<P*> params = {&w};
  AdamState state = train::make_adam_state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  const A before = w.value;
  for (int step = 0; step < 5; ++step)
    train::adam_step(params, state, 0.01, cfg);
  CHECK(same_bits(w.value, before));
}

TEST_CASE("adam matches a hand-evaluated single update") {
  P w("w", A::full({1}, 0.5));
  w.grad.v[0] = 1.0;
  std::vector<P*> params = {&w};
  AdamState state = train::make_adam_state(params);
  TrainConfig cfg;  // beta1 0.9, beta2 0.98, eps 1e-9, decay 1e-6
  const double lr = 0.01;
  train::adam_step(params, state, lr, cfg);

  // First step by hand: m-hat and v-hat both debias to exactly g and g^2.
  const double m_hat = (0.1 * 1.0) / (1.0 - 0.9);
  const double v_hat = (0.02 * 1.0) / (1.0 - 0.98);
  const double expect =
      0.5 - lr * (m_hat / (std::sqrt(v_hat) + 1e-9) + 1e-6 * 0.5);
  CHECK(w.value.v[0] == doctest::Approx(expect).epsilon(1e-15));

  // Weight decay is decoupled: with zero gradient the parameter still decays.
  P d("d", A::full({1}, 2.0));
  std::vector<P*> dparams = {&d};
  AdamState dstate = train::make_adam_state(dparams);
  TrainConfig decay_cfg;
  decay_cfg.weight_decay = 0.5;
  train::adam_step(dparams, dstate, 0.1, decay_cfg);
  CHECK(d.value.v[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("adam aborts on a non-finite gradient") {
  P w("enc.some.weight", A::full({2}, 0.0));
  w.grad.v[1] = std::nan("");
  std::vector<P*> params = {&w};
  AdamState state = train::make_adam_state(params);
  TrainConfig cfg;
  CHECK(kind_of([&] { train::adam_step(params, state, 0.01, cfg); }) ==
        ErrorKind::kNumeric);
}

TEST_CASE("global norm clipping rescales only oversized gradients") {
  P a("a", A::zeros({3}));
  P b("b", A::zeros({1}));
  a.grad.v = {0.0, 3.0, 0.0};
  b.grad.v = {4.0};  // global norm 5 with a
  std::vector<P*> params = {&a, &b};

  // Exactly at the threshold: untouched.
  CHECK(train::clip_global_norm(params, 5.0) == doctest::Approx(5.0));
  CHECK(a.grad.v[1] == 3.0);
  CHECK(b.grad.v[0] == 4.0);

  // Above the threshold: scaled back onto it.
  CHECK(train::clip_global_norm(params, 2.5) == doctest::Approx(5.0));
  double sq = 0.0;
  for (const P* p : params)
    for (double g : p->grad.v) sq += g * g;
  CHECK(std::sqrt(sq) == doctest::Approx(2.5));
}

TEST_CASE("checkpoints round-trip through the container format") {
  nn::Model<double> model(toy_cfg(8), 11);
  const Checkpoint ckpt = train::snapshot(model, 42, 1.375);
  const std::string path = tmp_path("roundtrip.cntm");
  train::save_checkpoint(path, ckpt);
  const Checkpoint back = train::load_checkpoint(path);
  CHECK(back.fingerprint == ckpt.fingerprint);
  CHECK(back.step == 42);
  CHECK(back.dev_score == 1.375);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (size_t i = 0; i < back.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ckpt.tensors[i].name);
    CHECK(same_bits(back.tensors[i].value, ckpt.tensors[i].value));
  }

  // Restoring into a same-architecture model reproduces the parameters.
  nn::Model<double> other(toy_cfg(8), 99);
  train::restore(other, back);
  const auto want = model.parameters();
  const auto got = other.parameters();
  REQUIRE(want.size() == got.size());
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(same_bits(want[i]->value, got[i]->value));

  // A different architecture is rejected by fingerprint. Memory width feeds
  // the head projection shapes, so it is visible to the fingerprint even
  // with the constant memory init (row count alone would not be).
  nn::ModelConfig narrow = toy_cfg(8);
  narrow.bridge.mem.cols = 3;
  nn::Model<double> mismatched(narrow, 11);
  CHECK(kind_of([&] { train::restore(mismatched, back); }) ==
        ErrorKind::kData);

  // A plain tensor file without meta records is not a checkpoint.
  cntm::io::TensorFile raw;
  raw.fingerprint = ckpt.fingerprint;
  const std::string not_ckpt = tmp_path("not-checkpoint.tensors");
  cntm::io::write_tensor_file(not_ckpt, raw);
  CHECK(kind_of([&] { train::load_checkpoint(not_ckpt); }) ==
        ErrorKind::kData);
}

TEST_CASE("checkpoint averaging is exact on the pinned examples") {
  // Singleton: bit-identical.
  const Checkpoint solo = tiny_ckpt(5, 1, 0.5, 0.1);
  const Checkpoint solo_avg = train::checkpoint_average({solo});
  CHECK(same_bits(solo_avg.tensors[0].value, solo.tensors[0].value));
  CHECK(same_bits(solo_avg.tensors[1].value, solo.tensors[1].value));

  // Identical checkpoints: bit-identical mean regardless of count.
  const std::vector<Checkpoint> triple = {tiny_ckpt(5, 1, 0.5, 0.1),
                                          tiny_ckpt(5, 1, 0.5, 0.1),
                                          tiny_ckpt(5, 1, 0.5, 0.1)};
  const Checkpoint triple_avg = train::checkpoint_average(triple);
  CHECK(same_bits(triple_avg.tensors[0].value, solo.tensors[0].value));
  CHECK(same_bits(triple_avg.tensors[1].value, solo.tensors[1].value));

  // Parameters 0 and 2 average to 1.
  const Checkpoint zero = tiny_ckpt(5, 1, 0.7, 0.0);
  const Checkpoint two = tiny_ckpt(5, 2, 0.3, 2.0);
  const Checkpoint mid = train::checkpoint_average({zero, two});
  for (double x : mid.tensors[0].value.v) CHECK(x == 1.0);
  for (double x : mid.tensors[1].value.v) CHECK(x == 2.0);
  CHECK(mid.step == 2);
  CHECK(mid.dev_score == 0.3);
}

TEST_CASE("checkpoint averaging is permutation invariant bit for bit") {
  const Checkpoint c1 = tiny_ckpt(5, 1, 0.9, 0.317);
  const Checkpoint c2 = tiny_ckpt(5, 2, 0.8, -1.25);
  const Checkpoint c3 = tiny_ckpt(5, 3, 0.7, 0.1);
  const Checkpoint abc = train::checkpoint_average({c1, c2, c3});
  const Checkpoint cba = train::checkpoint_average({c3, c1, c2});
  CHECK(same_bits(abc.tensors[0].value, cba.tensors[0].value));
  CHECK(same_bits(abc.tensors[1].value, cba.tensors[1].value));
  CHECK(abc.step == cba.step);

  // Mixed architectures cannot be averaged.
  const Checkpoint alien = tiny_ckpt(6, 1, 0.5, 0.0);
  CHECK(kind_of([&] { train::checkpoint_average({c1, alien}); }) ==
        ErrorKind::kData);
  CHECK(kind_of([&] { train::checkpoint_average({}); }) ==
        ErrorKind::kDomain);
}

TEST_CASE("best-k selection keeps the lowest dev scores") {
  std::vector<Checkpoint> ckpts = {tiny_ckpt(5, 1, 3.0, 0.0),
                                   tiny_ckpt(5, 2, 1.0, 0.0),
                                   tiny_ckpt(5, 3, 2.0, 0.0)};
  const auto best = train::keep_best_k(ckpts, 2);
  REQUIRE(best.size() == 2);
  CHECK(best[0].dev_score == 1.0);
  CHECK(best[1].dev_score == 2.0);

  const auto all = train::keep_best_k(ckpts, 10);
  CHECK(all.size() == 3);
  CHECK(kind_of([&] { train::keep_best_k(ckpts, 0); }) == ErrorKind::kDomain);
}

TEST_CASE("token budget batching packs greedily without splitting items") {
  Corpus c = cntm::data::gen_copy(3, 10, {4, 4}, 4);
  std::vector<size_t> order;
  for (size_t i = 0; i < c.size(); ++i) order.push_back(i);

  // Ten 4-token utterances under a 16-token budget: 4+4+2 items.
  const auto batches = train::pack_batches(c, order, 16);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  // An oversized utterance still forms its own batch.
  Corpus big;
  big.push_back(c[0]);
  cntm::data::Utterance huge;
  huge.id = "huge";
  huge.tokens.assign(40, 1);
  huge.duration = 40;
  big.push_back(huge);
  big.push_back(c[1]);
  const auto lumpy =
      train::pack_batches(big, std::vector<size_t>{0, 1, 2}, 16);
  REQUIRE(lumpy.size() == 3);
  CHECK(lumpy[1].size() == 1);
}

TEST_CASE("item loss falls back to attention when alignment is infeasible") {
  nn::Model<double> model(toy_cfg(8), 21);
  nn::ObjectiveConfig obj;

  cntm::data::Utterance distinct;
  distinct.id = "ok";
  distinct.tokens = {0, 1, 2};
  distinct.duration = 3;
  cntm::ag::Graph<double> g(false);
  CHECK(train::item_loss(g, model, distinct, TaskKind::kCopy, 4, obj)
            .used_ctc);

  // An adjacent repeat needs a separating blank frame the input cannot carry.
  cntm::data::Utterance repeated;
  repeated.id = "repeat";
  repeated.tokens = {3, 3};
  repeated.duration = 2;
  cntm::ag::Graph<double> g2(false);
  const auto fallback =
      train::item_loss(g2, model, repeated, TaskKind::kCopy, 4, obj);
  CHECK_FALSE(fallback.used_ctc);
  CHECK(std::isfinite(fallback.loss.value().v[0]));

  // Disabling the alignment branch disables it for every item.
  nn::ObjectiveConfig att_only = obj;
  att_only.ctc_weight = 0.0;
  cntm::ag::Graph<double> g3(false);
  CHECK_FALSE(train::item_loss(g3, model, distinct, TaskKind::kCopy, 4,
                               att_only)
                  .used_ctc);
}

TEST_CASE("a fixed tiny batch trains to strictly decreasing loss") {
  nn::Model<double> model(toy_cfg(8), 31);
  nn::ObjectiveConfig obj;
  const Corpus corpus = cntm::data::gen_copy(17, 3, {2, 4}, 4);
  const std::vector<size_t> batch = {0, 1, 2};
  const auto params = model.parameters();
  AdamState state = train::make_adam_state(params);
  TrainConfig cfg;

  double prev = 0.0;
  for (int step = 0; step < 50; ++step) {
    cntm::ag::Graph<double> g(true);
    const auto bl =
        train::batch_loss(g, model, corpus, batch, TaskKind::kCopy, 4, obj);
    const double loss = bl.loss.value().v[0];
    if (step > 0) CHECK(loss < prev);
    prev = loss;
    for (auto* p : params) p->zero_grad();
    g.backward(bl.loss);
    train::clip_global_norm(params, cfg.clip_norm);
    train::adam_step(params, state, 1e-3, cfg);
  }
}

TEST_CASE("train runs the exact batch count and is deterministic") {
  const Corpus corpus = cntm::data::gen_copy(23, 10, {4, 4}, 4);
  const Corpus dev = cntm::data::gen_copy(24, 4, {4, 4}, 4);
  nn::ObjectiveConfig obj;
  const TrainConfig cfg = quick_train_cfg();

  nn::Model<double> model(toy_cfg(8), 41);
  const auto result =
      train::train(model, corpus, dev, TaskKind::kCopy, 4, obj, cfg);

  // Forty tokens under a 16-token budget: ceil(40/16) = 3 optimizer steps.
  CHECK(result.steps == 3);
  CHECK(result.epoch_dev.size() == 1);
  // One line per step plus the epoch dev line.
  CHECK(result.log_lines.size() == 4);
  CHECK(result.log_lines.back().find('-') == std::string::npos);
  CHECK(result.final_checkpoint.fingerprint == model.fingerprint());
  CHECK(result.best_dev == result.epoch_dev[0]);

  nn::Model<double> model2(toy_cfg(8), 41);
  const auto result2 =
      train::train(model2, corpus, dev, TaskKind::kCopy, 4, obj, cfg);
  CHECK(result2.epoch_dev[0] == result.epoch_dev[0]);
  REQUIRE(result2.final_checkpoint.tensors.size() ==
          result.final_checkpoint.tensors.size());
  for (size_t i = 0; i < result.final_checkpoint.tensors.size(); ++i)
    CHECK(same_bits(result.final_checkpoint.tensors[i].value,
                    result2.final_checkpoint.tensors[i].value));
}

TEST_CASE("train writes an append-only metrics log") {
  const Corpus corpus = cntm::data::gen_copy(23, 4, {3, 3}, 4);
  const Corpus dev = cntm::data::gen_copy(24, 2, {3, 3}, 4);
  nn::ObjectiveConfig obj;
  TrainConfig cfg = quick_train_cfg();
  cfg.batch_bins = 6;

  const std::string log_path = tmp_path("metrics.log");
  std::filesystem::remove(log_path);
  nn::Model<double> model(toy_cfg(8), 51);
  const auto result = train::train(model, corpus, dev, TaskKind::kCopy, 4,
                                   obj, cfg, log_path);

  std::ifstream in(log_path);
  REQUIRE(in.is_open());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == result.log_lines.size());
  for (size_t i = 0; i < lines.size(); ++i) CHECK(lines[i] == result.log_lines[i]);
  // Each line is step TAB lr TAB train TAB dev-or-dash.
  for (const auto& l : lines)
    CHECK(std::count(l.begin(), l.end(), '\t') == 3);
}

TEST_CASE("train aborts and dumps state when the loss turns non-finite") {
  const Corpus corpus = cntm::data::gen_copy(23, 4, {3, 3}, 4);
  nn::ObjectiveConfig obj;
  TrainConfig cfg = quick_train_cfg();
  cfg.dump_path = tmp_path("blowup.cntm");
  std::filesystem::remove(cfg.dump_path);

  nn::Model<double> model(toy_cfg(8), 61);
  model.parameters().front()->value.v[0] = std::nan("");
  CHECK(kind_of([&] {
          train::train(model, corpus, corpus, TaskKind::kCopy, 4, obj, cfg);
        }) == ErrorKind::kNumeric);
  CHECK(std::filesystem::exists(cfg.dump_path));
  const Checkpoint dumped = train::load_checkpoint(cfg.dump_path);
  CHECK(dumped.fingerprint == model.fingerprint());
}

TEST_CASE("token accuracy is a pooled edit-distance complement") {
  nn::Model<double> model(toy_cfg(8), 71);
  const Corpus corpus = cntm::data::gen_copy(25, 4, {2, 3}, 4);
  const double acc =
      train::token_accuracy(model, corpus, TaskKind::kCopy, 4);
  CHECK(std::isfinite(acc));
  CHECK(acc <= 1.0);
}

TEST_CASE("train config validation rejects bad numbers") {
  TrainConfig cfg;
  cfg.peak_lr = 0.0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = TrainConfig();
  cfg.warmup_steps = 0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = TrainConfig();
  cfg.beta2 = 1.0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = TrainConfig();
  cfg.batch_bins = 0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = TrainConfig();
  cfg.keep_best_k = 0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
}
