/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

// Acceptance gate: one binary, one pass/fail line per criterion, tolerances
// pinned in code. Criteria cover oracle equivalences, the gradient battery,
// exhaustive alignment-loss checks, simplex invariants, copy-task
// learnability, length generalization against the memoryless baseline, and
// the exact schedule/averaging anchors. Run with no arguments for the full
// gate, or pass criterion numbers to run a subset.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "ag/ops.hpp"
#include "cfg/config.hpp"
#include "check/battery.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"
#include "data/corpus.hpp"
#include "eval/scoring.hpp"
#include "nn/encoder.hpp"
#include "nn/losses.hpp"
#include "nn/model.hpp"
#include "ntm/bridge.hpp"
#include "ntm/memory.hpp"
#include "oracles.hpp"
#include "train/trainer.hpp"

using cntm::Rng;
using cntm::ag::Array;
using cntm::ag::Graph;
using cntm::ag::Var;
namespace ag = cntm::ag;
namespace ntm = cntm::ntm;
namespace nn = cntm::nn;
namespace data = cntm::data;
namespace train = cntm::train;
namespace check = cntm::check;
namespace cfgns = cntm::cfg;

namespace {

using A = Array<double>;
using G = Graph<double>;
using V = Var<double>;

// ---- shared helpers --------------------------------------------------------

V vec_in(G& g, std::vector<double> x) {
  int64_t n = int64_t(x.size());
  return g.input(A::from({n}, std::move(x)));
}

V mat_in(G& g, const oracle::Mat& m) {
  int64_t r = int64_t(m.size()), c = int64_t(m[0].size());
  A a({r, c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) a.at(i, j) = m[size_t(i)][size_t(j)];
  return g.input(std::move(a));
}

std::vector<double> random_simplex(Rng& rng, int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  double z = 0;
  for (double& x : w) z += (x = rng.uniform_real(0.01, 1.0));
  for (double& x : w) x /= z;
  return w;
}

oracle::Mat random_matrix(Rng& rng, int64_t rows, int64_t cols) {
  oracle::Mat m(static_cast<size_t>(rows),
                oracle::Vec(static_cast<size_t>(cols)));
  for (auto& row : m)
    for (double& x : row) {
      x = rng.uniform_real(0.5, 2.0);
      if (rng.uniform_real(0.0, 1.0) < 0.5) x = -x;
    }
  return m;
}

ntm::HeadEmissions<double> fixed_emissions(G& g, std::vector<double> key,
                                           double beta, double gate,
                                           std::vector<double> shift,
                                           double gamma,
                                           std::vector<double> erase = {},
                                           std::vector<double> add = {}) {
  ntm::HeadEmissions<double> em;
  em.key = vec_in(g, std::move(key));
  em.beta = g.scalar(beta);
  em.gate = g.scalar(gate);
  em.shift = vec_in(g, std::move(shift));
  em.gamma = g.scalar(gamma);
  if (!erase.empty()) {
    em.erase = vec_in(g, std::move(erase));
    em.add = vec_in(g, std::move(add));
    em.is_write = true;
  }
  return em;
}

double max_abs_diff(const std::vector<double>& got, const oracle::Vec& want) {
  double worst = 0.0;
  for (size_t i = 0; i < want.size(); ++i)
    worst = std::max(worst, std::fabs(got[i] - want[i]));
  return worst;
}

bool simplex_ok(const std::vector<double>& w, double tol) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) return false;
    sum += x;
  }
  return std::fabs(sum - 1.0) <= tol;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- training fixtures for the learnability criteria ------------------------

uint64_t sub_seed(uint64_t seed, const char* name) {
  return Rng(seed, name).next_u64();
}

constexpr int64_t kTaskVocab = 16;

struct CopyBench {
  data::Corpus train, dev, held_out, longer, very_long;
};

// Training lengths 1..8; "long" 16..24; "very long" built like the benchmark
// generator: shorter segments chained and concatenated into 25..64.
CopyBench make_copy_bench(uint64_t seed) {
  CopyBench b;
  b.train = data::gen_copy(sub_seed(seed, "train"), 512, {1, 8}, kTaskVocab);
  b.dev = data::gen_copy(sub_seed(seed, "dev"), 48, {1, 8}, kTaskVocab);
  b.held_out =
      data::gen_copy(sub_seed(seed, "held-out"), 200, {1, 8}, kTaskVocab);
  b.longer = data::gen_copy(sub_seed(seed, "long"), 60, {16, 24}, kTaskVocab);
  data::Corpus base =
      data::gen_copy(sub_seed(seed, "very-long"), 150, {13, 16}, kTaskVocab);
  base = data::assign_chains(std::move(base), sub_seed(seed, "chains"), {2, 4});
  data::Corpus merged = data::concat_segments(base);
  std::erase_if(merged,
                [](const data::Utterance& u) { return u.duration < 25.0; });
  b.very_long = std::move(merged);
  return b;
}

// The toy geometry exercised by the whole gate: 64-dim model, two encoder and
// two decoder blocks, two heads, feedforward 128, kernel 7, memory 32 x 8.
cfgns::RunConfig toy_config() {
  cfgns::RunConfig cfg;
  cfg.set("model.d_model", "64");
  cfg.set("model.enc_blocks", "2");
  cfg.set("model.dec_blocks", "2");
  cfg.set("model.heads", "2");
  cfg.set("model.enc_ff", "128");
  cfg.set("model.dec_ff", "128");
  cfg.set("model.conv_kernel", "7");
  cfg.set("ntm.rows", "32");
  cfg.set("ntm.cols", "8");
  cfg.set("task.vocab", "16");
  cfg.validate();
  return cfg;
}

train::TrainConfig toy_train_config(uint64_t seed) {
  train::TrainConfig tc;
  tc.peak_lr = 0.002;
  tc.warmup_steps = 300;
  tc.batch_bins = 256;
  tc.epochs = 80;
  tc.keep_best_k = 5;
  tc.seed = seed;
  tc.dump_path = "/tmp/cntm-acceptance-diverged.cntm";
  return tc;
}

// Trains one copy-task model and returns it with the step count.
struct TrainedModel {
  nn::Model<double> model;
  int64_t steps = 0;
};

TrainedModel train_copy_model(const CopyBench& bench, bool use_memory,
                              uint64_t seed) {
  cfgns::RunConfig cfg = toy_config();
  const int64_t width = train::model_vocab(data::TaskKind::kCopy, kTaskVocab);
  TrainedModel out{nn::Model<double>(cfg.model_config(width, use_memory), seed),
                   0};
  const train::TrainConfig tc = toy_train_config(seed);
  const train::TrainResult result =
      train::train(out.model, bench.train, bench.dev, data::TaskKind::kCopy,
                   kTaskVocab, cfg.objective(), tc);
  train::restore(out.model, result.final_checkpoint);
  out.steps = result.steps;
  return out;
}

double token_error(nn::Model<double>& model, const data::Corpus& corpus) {
  return 1.0 -
         train::token_accuracy(model, corpus, data::TaskKind::kCopy,
                               kTaskVocab);
}

// ---- criteria ---------------------------------------------------------------

struct Outcome {
  bool passed = false;
  std::string detail;
};

// Addressing pipeline vs the straight-line oracle on random instances.
Outcome crit_addressing_oracle() {
  Rng rng(9001, "acceptance/addressing");
  double worst = 0.0;
  const double tol = 1e-10;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t N = rng.uniform_int(1, 8);
    const int64_t W = rng.uniform_int(1, 4);
    const oracle::Mat mem = random_matrix(rng, N, W);
    oracle::Vec key(static_cast<size_t>(W));
    for (double& x : key) x = rng.uniform_real(-2.0, 2.0);
    const double beta = rng.uniform_real(0.1, 5.0);
    const double gate = rng.uniform_real(0.01, 0.99);
    const double gamma = rng.uniform_real(1.0, 3.0);
    const oracle::Vec shift = random_simplex(rng, 3);
    const oracle::Vec w_prev = random_simplex(rng, N);
    const bool power = trial % 2 == 1;

    const oracle::AddressStages want = oracle::address(
        key, beta, gate, shift, gamma, mem, w_prev, {-1, 0, 1}, power);

    ntm::MemoryConfig cfg;
    cfg.rows = N;
    cfg.cols = W;
    cfg.sharpen_mode =
        power ? ntm::SharpenMode::kPower : ntm::SharpenMode::kSoftmax;
    G g;
    auto em = fixed_emissions(g, key, beta, gate, shift, gamma);
    const auto aw = ntm::address(em, mat_in(g, mem), vec_in(g, w_prev), cfg);

    worst = std::max(worst, max_abs_diff(aw.content.value().v, want.content));
    worst = std::max(worst, max_abs_diff(aw.gated.value().v, want.gated));
    worst = std::max(worst, max_abs_diff(aw.shifted.value().v, want.shifted));
    worst = std::max(worst, max_abs_diff(aw.final.value().v, want.final_w));
  }
  return {worst <= tol,
          fmt("200 random cases (N<=8, W<=4), max abs err %.2e, tol %.0e",
              worst, tol)};
}

// Read blending and erase/add writes vs direct summation.
Outcome crit_read_write_oracle() {
  Rng rng(9007, "acceptance/read-write");
  double worst = 0.0;
  const double tol = 1e-10;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t N = rng.uniform_int(1, 8);
    const int64_t W = rng.uniform_int(1, 4);
    const oracle::Mat mem = random_matrix(rng, N, W);
    const oracle::Vec w = random_simplex(rng, N);
    oracle::Vec erase(static_cast<size_t>(W));
    oracle::Vec add(static_cast<size_t>(W));
    for (double& x : erase) x = rng.uniform_real(0.01, 0.99);
    for (double& x : add) x = rng.uniform_real(-2.0, 2.0);

    const oracle::Vec want_r = oracle::read(mem, w);
    const oracle::Mat want_m = oracle::write(mem, w, erase, add);

    G g;
    const V mem_v = mat_in(g, mem);
    const V w_v = vec_in(g, w);
    const auto got_r = ntm::read(mem_v, w_v).value().v;
    const auto got_m =
        ntm::write(mem_v, w_v, vec_in(g, erase), vec_in(g, add)).value().v;

    worst = std::max(worst, max_abs_diff(got_r, want_r));
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < W; ++j)
        worst = std::max(worst, std::fabs(got_m[size_t(i * W + j)] -
                                          want_m[size_t(i)][size_t(j)]));
  }
  return {worst <= tol,
          fmt("200 random cases (N<=8, W<=4), max abs err %.2e, tol %.0e",
              worst, tol)};
}

// Full finite-difference battery: primitives, addressing, rollout, alignment
// loss, assembled toy model.
Outcome crit_grad_battery() {
  check::BatteryOptions opt;
  const check::BatteryReport report = check::run_battery(opt);
  double worst = 0.0;
  int failed = 0;
  for (const auto& c : report.cases) {
    worst = std::max(worst, c.report.max_rel_err);
    failed += c.passed ? 0 : 1;
  }
  return {report.all_passed(),
          fmt("%zu cases, %d failed, max rel err %.2e, tol 1e-4",
              report.cases.size(), failed, worst)};
}

// Alignment loss vs exhaustive path enumeration on every tiny shape.
Outcome crit_ctc_brute_force() {
  Rng rng(9011, "acceptance/ctc");
  double worst = 0.0;
  const double tol = 1e-8;
  int cases = 0, infeasible = 0;
  for (int64_t V = 1; V <= 3; ++V) {
    // Every target over the data alphabet {1..V-1} up to length 3 (blank 0).
    std::vector<std::vector<int64_t>> targets{{}};
    for (size_t head = 0; head < targets.size(); ++head) {
      if (targets[head].size() == 3) continue;
      for (int64_t s = 1; s < V; ++s) {
        auto t = targets[head];
        t.push_back(s);
        targets.push_back(std::move(t));
      }
    }
    for (int64_t T = 1; T <= 4; ++T)
      for (const auto& y : targets) {
        A logits({T, V});
        for (double& x : logits.v) x = rng.uniform_real(-3.0, 3.0);
        if (nn::ctc_min_frames(y) > T) {
          // Infeasible alignments must be rejected, not silently scored.
          bool threw = false;
          try {
            G g;
            nn::ctc_loss(g, g.input(logits), y, 0);
          } catch (const cntm::Error&) {
            threw = true;
          }
          if (!threw) return {false, "missing infeasible-alignment error"};
          ++infeasible;
          continue;
        }
        G g;
        const double got = nn::ctc_loss(g, g.input(logits), y, 0).value().v[0];
        oracle::Mat probs(static_cast<size_t>(T),
                          oracle::Vec(static_cast<size_t>(V)));
        for (int64_t t = 0; t < T; ++t) {
          double z = 0.0;
          for (int64_t v = 0; v < V; ++v)
            z += (probs[size_t(t)][size_t(v)] = std::exp(logits.at(t, v)));
          for (int64_t v = 0; v < V; ++v) probs[size_t(t)][size_t(v)] /= z;
        }
        const std::vector<int> y_int(y.begin(), y.end());
        const double want = -std::log(oracle::ctc_path_sum(probs, y_int, 0));
        worst = std::max(worst, std::fabs(got - want));
        ++cases;
      }
  }
  return {worst <= tol,
          fmt("%d cases (T<=4, |y|<=3, vocab<=3) + %d infeasible, max log-"
              "domain err %.2e, tol %.0e",
              cases, infeasible, worst, tol)};
}

// Every addressing stage and every rollout weight vector stays on the
// simplex.
Outcome crit_simplex_invariants() {
  Rng rng(9013, "acceptance/simplex");
  const double tol = 1e-6;
  int checked = 0;

  // Stage fuzz through the real squashers on random raw emissions.
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t N = rng.uniform_int(2, 12);
    const int64_t W = rng.uniform_int(2, 6);
    ntm::MemoryConfig cfg;
    cfg.rows = N;
    cfg.cols = W;
    cfg.sharpen_mode = trial % 2 == 1 ? ntm::SharpenMode::kPower
                                      : ntm::SharpenMode::kSoftmax;
    const bool is_write = trial % 3 == 0;
    const int64_t raw_n = is_write ? ntm::write_raw_size(W, 3)
                                   : ntm::read_raw_size(W, 3);
    std::vector<double> raw(static_cast<size_t>(raw_n));
    for (double& x : raw) x = rng.uniform_real(-8.0, 8.0);

    G g;
    auto em = ntm::split_emissions(vec_in(g, std::move(raw)), cfg, is_write);
    const auto aw = ntm::address(em, mat_in(g, random_matrix(rng, N, W)),
                                 vec_in(g, random_simplex(rng, N)), cfg);
    for (const V& stage : {aw.content, aw.gated, aw.shifted, aw.final}) {
      if (!simplex_ok(stage.value().v, tol))
        return {false, fmt("stage off the simplex at trial %d", trial)};
      ++checked;
    }
  }

  // 64-step rollouts, all heads, both orders and init schemes.
  for (int roll = 0; roll < 8; ++roll) {
    ntm::BridgeConfig bcfg;
    bcfg.d_model = 12;
    bcfg.mem.rows = 8;
    bcfg.mem.cols = 5;
    bcfg.mem.init_scheme = roll % 2 == 1 ? ntm::InitScheme::kLearned
                                         : ntm::InitScheme::kConstant;
    bcfg.order = roll % 4 < 2 ? ntm::StepOrder::kWriteFirst
                              : ntm::StepOrder::kReadFirst;
    ntm::BridgeParams<double> params(bcfg, 5000 + uint64_t(roll),
                                     "acceptance/bridge");
    G g;
    ntm::BridgeState<double> state = ntm::bridge_init(g, params);
    for (int step = 0; step < 64; ++step) {
      std::vector<double> h(size_t(bcfg.d_model));
      for (double& x : h) x = rng.uniform_real(-2.0, 2.0);
      auto out = ntm::bridge_step(g, params, state, vec_in(g, std::move(h)));
      state = out.state;
      std::vector<ntm::AddressingWeights<double>> stages = out.write_stages;
      stages.insert(stages.end(), out.read_stages.begin(),
                    out.read_stages.end());
      for (const auto& aw : stages)
        for (const V& stage : {aw.content, aw.gated, aw.shifted, aw.final}) {
          if (!simplex_ok(stage.value().v, tol))
            return {false,
                    fmt("rollout %d step %d off the simplex", roll, step)};
          ++checked;
        }
      for (const V& w : state.head_w) {
        if (!simplex_ok(w.value().v, tol))
          return {false, fmt("rollout %d step %d carried weights off the "
                             "simplex",
                             roll, step)};
        ++checked;
      }
    }
  }
  return {true, fmt("%d weight vectors nonnegative, sum 1 +- 1e-6", checked)};
}

// The toy model learns the in-distribution copy task to >= 99% accuracy.
Outcome crit_learnability() {
  const CopyBench bench = make_copy_bench(77);
  TrainedModel tm = train_copy_model(bench, true, 1);
  const double acc = train::token_accuracy(tm.model, bench.held_out,
                                           data::TaskKind::kCopy, kTaskVocab);
  const bool steps_ok = tm.steps <= 20000;
  return {acc >= 0.99 && steps_ok,
          fmt("held-out token accuracy %.4f (need >= 0.99), %lld steps "
              "(cap 20000)",
              acc, static_cast<long long>(tm.steps))};
}

// Three seeds, memory vs identity baseline on the long and very-long splits.
Outcome crit_length_generalization() {
  const CopyBench bench = make_copy_bench(77);
  const uint64_t seeds[3] = {1, 2, 3};
  double sum_mem_long = 0, sum_mem_vl = 0, sum_none_long = 0, sum_none_vl = 0;
  int vl_gap_wins = 0;
  std::string per_seed;
  for (uint64_t seed : seeds) {
    TrainedModel mem = train_copy_model(bench, true, seed);
    TrainedModel none = train_copy_model(bench, false, seed);
    const double ml = token_error(mem.model, bench.longer);
    const double mv = token_error(mem.model, bench.very_long);
    const double nl = token_error(none.model, bench.longer);
    const double nv = token_error(none.model, bench.very_long);
    sum_mem_long += ml;
    sum_mem_vl += mv;
    sum_none_long += nl;
    sum_none_vl += nv;
    if (nv - mv >= nl - ml) ++vl_gap_wins;
    per_seed += fmt(" [seed %llu: long %.3f/%.3f, very-long %.3f/%.3f]",
                    static_cast<unsigned long long>(seed), ml, nl, mv, nv);
  }
  const bool mean_long = sum_mem_long < sum_none_long;
  const bool mean_vl = sum_mem_vl < sum_none_vl;
  const bool gaps = vl_gap_wins >= 2;
  return {mean_long && mean_vl && gaps,
          fmt("mean err memory/none: long %.3f/%.3f, very-long %.3f/%.3f, "
              "very-long gap >= long gap in %d/3 seeds;%s",
              sum_mem_long / 3, sum_none_long / 3, sum_mem_vl / 3,
              sum_none_vl / 3, vl_gap_wins, per_seed.c_str())};
}

// Relative error-rate reduction reproduces the published reference points.
Outcome crit_metrics_formulas() {
  const double a = cntm::eval::relative_reduction(9.3, 3.9);
  const double b = cntm::eval::relative_reduction(14.7, 10.8);
  const bool ok = std::fabs(a - 58.1) <= 0.05 && std::fabs(b - 26.5) <= 0.05;
  return {ok, fmt("(9.3, 3.9) -> %.2f%% (want 58.1 +- 0.05), (14.7, 10.8) -> "
                  "%.2f%% (want 26.5 +- 0.05)",
                  a, b)};
}

// Two-layer stride-2 subsampling length formula.
Outcome crit_subsampling() {
  if (nn::subsampled_length(11) != 2) return {false, "T=11 did not give 2"};
  if (nn::subsampled_length(7) != 1) return {false, "T=7 did not give 1"};
  for (int64_t T = 7; T <= 200; ++T)
    if (nn::subsampled_length(T) != ((T - 1) / 2 - 1) / 2)
      return {false, fmt("formula mismatch at T=%lld",
                         static_cast<long long>(T))};
  return {true, "T=11 -> 2, T=7 -> 1, T'' = ((T-1)/2-1)/2 for T in [7, 200]"};
}

// Exact schedule anchor and bit-identical checkpoint averaging.
Outcome crit_schedule_and_averaging() {
  for (const auto& [peak, warmup] :
       std::vector<std::pair<double, int64_t>>{
           {0.002, 15000}, {0.7, 13}, {1e-3, 1}, {0.05, 4096}}) {
    if (train::lr_at(warmup, peak, warmup) != peak)
      return {false, fmt("lr(warmup) != peak for peak %g warmup %lld", peak,
                         static_cast<long long>(warmup))};
  }

  Rng rng(9029, "acceptance/average");
  train::Checkpoint ckpt;
  ckpt.fingerprint = 0xfeedu;
  ckpt.step = 321;
  ckpt.dev_score = 1.25;
  ckpt.tensors.push_back({"block/w", A({7, 3})});
  ckpt.tensors.push_back({"block/b", A({11})});
  for (auto& t : ckpt.tensors)
    for (double& x : t.value.v) x = rng.uniform_real(-3.0, 3.0);
  const train::Checkpoint avg =
      train::checkpoint_average({ckpt, ckpt, ckpt});
  for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const auto& a = avg.tensors[i].value.v;
    const auto& b = ckpt.tensors[i].value.v;
    if (std::memcmp(a.data(), b.data(), b.size() * sizeof(double)) != 0)
      return {false, "averaging identical checkpoints changed bits"};
  }
  return {true,
          "lr(warmup) == peak on 4 anchors; mean of 3 identical checkpoints "
          "is bit-identical"};
}

struct Criterion {
  int id;
  const char* label;
  double limit_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "addressing oracle equivalence", 10, crit_addressing_oracle},
    {2, "read/write oracle equivalence", 10, crit_read_write_oracle},
    {3, "gradient battery", 300, crit_grad_battery},
    {4, "alignment loss brute-force equivalence", 60, crit_ctc_brute_force},
    {5, "simplex invariants", 60, crit_simplex_invariants},
    {6, "copy-task learnability", 1800, crit_learnability},
    {7, "length generalization", 7200, crit_length_generalization},
    {8, "metrics formulas", 10, crit_metrics_formulas},
    {9, "subsampling length formula", 10, crit_subsampling},
    {10, "schedule and checkpoint averaging", 10,
     crit_schedule_and_averaging},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int ran = 0, passed = 0;
  for (const Criterion& c : kCriteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, fmt("exception: %s", e.what())};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const bool in_time = seconds <= c.limit_seconds;
    const bool ok = outcome.passed && in_time;
    passed += ok ? 1 : 0;
    std::printf("[%2d] %s  %s: %s (%.1fs, limit %.0fs)\n", c.id,
                ok ? "PASS" : "FAIL", c.label, outcome.detail.c_str(), seconds,
                c.limit_seconds);
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d criteria passed\n", passed, ran);
  return passed == ran ? 0 : 1;
}
