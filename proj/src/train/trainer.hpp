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

#include "data/corpus.hpp"
#include "io/container.hpp"
#include "nn/losses.hpp"
#include "nn/model.hpp"

// Optimization loop and checkpoint management. Everything here runs on
// double precision single-threaded, so a fixed seed reproduces the whole
// trajectory bit for bit.
namespace cntm::train {

struct TrainConfig {
  double peak_lr = 0.002;
  int64_t warmup_steps = 15000;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  int64_t epochs = 10;
  int64_t batch_bins = 2000;  // per-batch target-token budget
  int64_t keep_best_k = 10;
  double clip_norm = 5.0;
  uint64_t seed = 1;
  std::string dump_path = "diverged.cntm";  // state dump on non-finite loss

  void validate() const;
};

// Linear ramp to peak_lr at step == warmup_steps, inverse-sqrt decay after.
// Computed as peak * min(sqrt(warmup/step), step/warmup) so that the anchors
// lr(warmup) == peak_lr, lr(warmup/4) == peak_lr/4 and lr(4*warmup) ==
// peak_lr/2 hold exactly in floating point.
double lr_at(int64_t step, double peak_lr, int64_t warmup_steps);

struct AdamState {
  std::vector<ag::Array<double>> m;
  std::vector<ag::Array<double>> v;
  int64_t t = 0;
};

AdamState make_adam_state(const std::vector<ag::Parameter<double>*>& params);

// Bias-corrected Adam with decoupled weight decay. A non-finite gradient
// aborts with the offending parameter named in the diagnostic.
void adam_step(const std::vector<ag::Parameter<double>*>& params,
               AdamState& state, double lr, const TrainConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(const std::vector<ag::Parameter<double>*>& params,
                        double max_norm);

struct Checkpoint {
  uint64_t fingerprint = 0;
  int64_t step = 0;
  double dev_score = 0.0;
  std::vector<io::NamedTensor> tensors;
};

Checkpoint snapshot(nn::Model<double>& model, int64_t step, double dev_score);
void restore(nn::Model<double>& model, const Checkpoint& ckpt);

// Checkpoints reuse the tensor container; step and dev score travel as
// reserved "meta/..." records so the format stays single.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// The k checkpoints with the lowest dev score (ties toward the earlier
// step); returns fewer when the input is shorter.
std::vector<Checkpoint> keep_best_k(std::vector<Checkpoint> ckpts, int64_t k);

// Parameter-wise arithmetic mean. Inputs are summed in a canonical
// (step, dev score) order, so any permutation of the same checkpoints
// produces a bit-identical result.
Checkpoint checkpoint_average(const std::vector<Checkpoint>& ckpts);

// Raw corpus tokens are grafted onto the model vocabulary after the special
// ids (pad, sos, eos, blank); repeat-copy adds its separator after the data
// alphabet.
inline constexpr int64_t kSpecialTokens = 4;

int64_t model_vocab(data::TaskKind task, int64_t task_vocab);
std::vector<int64_t> shifted_tokens(const std::vector<int64_t>& raw);
ag::Array<double> one_hot_rows(const std::vector<int64_t>& shifted,
                               int64_t vocab);

// Joint objective for one utterance. Falls back to the attention branch
// alone when the encoded frame count cannot carry a valid alignment for the
// label sequence, which the copy tasks routinely produce.
struct ItemLoss {
  ag::Var<double> loss;
  bool used_ctc = false;
};

ItemLoss item_loss(ag::Graph<double>& g, nn::Model<double>& model,
                   const data::Utterance& utt, data::TaskKind task,
                   int64_t task_vocab, const nn::ObjectiveConfig& obj);

// Mean item loss over a batch; counts how many items lost their CTC branch.
struct BatchLoss {
  ag::Var<double> loss;
  int64_t items = 0;
  int64_t ctc_skipped = 0;
};

BatchLoss batch_loss(ag::Graph<double>& g, nn::Model<double>& model,
                     const data::Corpus& corpus,
                     const std::vector<size_t>& batch, data::TaskKind task,
                     int64_t task_vocab, const nn::ObjectiveConfig& obj);

// Mean item loss over a corpus without recording gradients.
double dev_loss(nn::Model<double>& model, const data::Corpus& corpus,
                data::TaskKind task, int64_t task_vocab,
                const nn::ObjectiveConfig& obj);

// Greedy-decode token accuracy: 1 - pooled edit distance over reference
// tokens. The dev-selection and acceptance metric for the synthetic tasks.
double token_accuracy(nn::Model<double>& model, const data::Corpus& corpus,
                      data::TaskKind task, int64_t task_vocab);

// Consecutive utterances packed greedily under the token budget; a batch
// never goes over budget unless a single utterance alone does.
std::vector<std::vector<size_t>> pack_batches(
    const data::Corpus& corpus, const std::vector<size_t>& order,
    int64_t batch_bins);

struct TrainResult {
  Checkpoint final_checkpoint;  // averaged over the best-k epoch snapshots
  std::vector<std::string> log_lines;
  int64_t steps = 0;
  int64_t ctc_skipped = 0;
  double best_dev = 0.0;
  std::vector<double> epoch_dev;
};

// Full loop: shuffled token-budget batches, warmup/decay schedule, global
// norm clipping, per-epoch dev evaluation and best-k snapshot tracking,
// averaged final checkpoint. Appends "step TAB lr TAB train TAB dev" lines
// to log_path when given (dev is "-" except on epoch boundaries).
TrainResult train(nn::Model<double>& model, const data::Corpus& train_corpus,
                  const data::Corpus& dev_corpus, data::TaskKind task,
                  int64_t task_vocab, const nn::ObjectiveConfig& obj,
                  const TrainConfig& cfg, const std::string& log_path = "");

}  // namespace cntm::train
