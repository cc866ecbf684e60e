/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "common/rng.hpp"
#include "eval/scoring.hpp"

namespace cntm::train {

void TrainConfig::validate() const {
  CNTM_CHECK(peak_lr > 0.0, ErrorKind::kConfig, "peak_lr must be positive");
  CNTM_CHECK(warmup_steps >= 1, ErrorKind::kConfig,
             "warmup_steps must be at least 1");
  CNTM_CHECK(weight_decay >= 0.0, ErrorKind::kConfig,
             "weight_decay must be nonnegative");
  CNTM_CHECK(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::kConfig,
             "beta1 must lie in [0, 1)");
  CNTM_CHECK(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::kConfig,
             "beta2 must lie in [0, 1)");
  CNTM_CHECK(adam_eps > 0.0, ErrorKind::kConfig, "adam_eps must be positive");
  CNTM_CHECK(epochs >= 1, ErrorKind::kConfig, "epochs must be at least 1");
  CNTM_CHECK(batch_bins >= 1, ErrorKind::kConfig,
             "batch_bins must be at least 1");
  CNTM_CHECK(keep_best_k >= 1, ErrorKind::kConfig,
             "keep_best_k must be at least 1");
  CNTM_CHECK(clip_norm > 0.0, ErrorKind::kConfig,
             "clip_norm must be positive");
}

double lr_at(int64_t step, double peak_lr, int64_t warmup_steps) {
  CNTM_CHECK(step >= 1, ErrorKind::kDomain, "schedule steps start at 1");
  CNTM_CHECK(warmup_steps >= 1, ErrorKind::kConfig,
             "warmup_steps must be at least 1");
  const double w = double(warmup_steps), s = double(step);
  return peak_lr * std::min(std::sqrt(w / s), s / w);
}

AdamState make_adam_state(const std::vector<ag::Parameter<double>*>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto* p : params) {
    state.m.push_back(ag::Array<double>::zeros(p->value.shape));
    state.v.push_back(ag::Array<double>::zeros(p->value.shape));
  }
  return state;
}

void adam_step(const std::vector<ag::Parameter<double>*>& params,
               AdamState& state, double lr, const TrainConfig& cfg) {
  CNTM_CHECK(params.size() == state.m.size(), ErrorKind::kShape,
             "optimizer state does not match the parameter list");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    ag::Parameter<double>& p = *params[i];
    CNTM_CHECK(p.grad.v.size() == state.m[i].v.size(), ErrorKind::kShape,
               "gradient shape changed under the optimizer: " + p.name);
    for (size_t k = 0; k < p.grad.v.size(); ++k) {
      const double g = p.grad.v[k];
      CNTM_CHECK(std::isfinite(g), ErrorKind::kNumeric,
                 "non-finite gradient in parameter " + p.name);
      double& m = state.m[i].v[k];
      double& v = state.v[i].v[k];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
      p.value.v[k] -= lr * (update + cfg.weight_decay * p.value.v[k]);
    }
  }
}

double clip_global_norm(const std::vector<ag::Parameter<double>*>& params,
                        double max_norm) {
  CNTM_CHECK(max_norm > 0.0, ErrorKind::kConfig,
             "clip threshold must be positive");
  double sq = 0.0;
  for (const auto* p : params)
    for (double g : p->grad.v) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto* p : params)
      for (double& g : p->grad.v) g *= scale;
  }
  return norm;
}

namespace {

const char* kMetaStep = "meta/step";
const char* kMetaDev = "meta/dev_score";

}  // namespace

Checkpoint snapshot(nn::Model<double>& model, int64_t step,
                    double dev_score) {
  Checkpoint ckpt;
  ckpt.fingerprint = model.fingerprint();
  ckpt.step = step;
  ckpt.dev_score = dev_score;
  for (const auto* p : model.parameters())
    ckpt.tensors.push_back({p->name, p->value});
  return ckpt;
}

void restore(nn::Model<double>& model, const Checkpoint& ckpt) {
  CNTM_CHECK(ckpt.fingerprint == model.fingerprint(), ErrorKind::kData,
             "checkpoint fingerprint does not match the model architecture");
  std::unordered_map<std::string, const io::NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t);
  for (auto* p : model.parameters()) {
    const auto it = by_name.find(p->name);
    CNTM_CHECK(it != by_name.end(), ErrorKind::kData,
               "checkpoint is missing parameter " + p->name);
    CNTM_CHECK(it->second->value.shape == p->value.shape, ErrorKind::kData,
               "checkpoint shape mismatch for " + p->name);
    p->value = it->second->value;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  io::TensorFile file;
  file.fingerprint = ckpt.fingerprint;
  file.tensors.push_back(
      {kMetaStep, ag::Array<double>::scalar(double(ckpt.step))});
  file.tensors.push_back(
      {kMetaDev, ag::Array<double>::scalar(ckpt.dev_score)});
  for (const auto& t : ckpt.tensors) file.tensors.push_back(t);
  io::write_tensor_file(path, file);
}

Checkpoint load_checkpoint(const std::string& path) {
  const io::TensorFile file = io::read_tensor_file(path);
  Checkpoint ckpt;
  ckpt.fingerprint = file.fingerprint;
  bool saw_step = false, saw_dev = false;
  for (const auto& t : file.tensors) {
    if (t.name == kMetaStep) {
      CNTM_CHECK(t.value.is_scalar(), ErrorKind::kData,
                 "malformed step record in " + path);
      ckpt.step = int64_t(t.value.v[0]);
      saw_step = true;
    } else if (t.name == kMetaDev) {
      CNTM_CHECK(t.value.is_scalar(), ErrorKind::kData,
                 "malformed dev score record in " + path);
      ckpt.dev_score = t.value.v[0];
      saw_dev = true;
    } else {
      ckpt.tensors.push_back(t);
    }
  }
  CNTM_CHECK(saw_step && saw_dev, ErrorKind::kData,
             "not a checkpoint (missing meta records): " + path);
  return ckpt;
}

std::vector<Checkpoint> keep_best_k(std::vector<Checkpoint> ckpts,
                                    int64_t k) {
  CNTM_CHECK(k >= 1, ErrorKind::kDomain, "keep_best_k needs k >= 1");
  std::sort(ckpts.begin(), ckpts.end(),
            [](const Checkpoint& a, const Checkpoint& b) {
              if (a.dev_score != b.dev_score) return a.dev_score < b.dev_score;
              return a.step < b.step;
            });
  if (int64_t(ckpts.size()) > k) ckpts.resize(size_t(k));
  return ckpts;
}

Checkpoint checkpoint_average(const std::vector<Checkpoint>& ckpts) {
  CNTM_CHECK(!ckpts.empty(), ErrorKind::kDomain,
             "cannot average zero checkpoints");
  std::vector<const Checkpoint*> ordered;
  ordered.reserve(ckpts.size());
  for (const auto& c : ckpts) {
    CNTM_CHECK(c.fingerprint == ckpts.front().fingerprint, ErrorKind::kData,
               "cannot average checkpoints of different architectures");
    CNTM_CHECK(c.tensors.size() == ckpts.front().tensors.size(),
               ErrorKind::kData, "checkpoint tensor lists differ");
    ordered.push_back(&c);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Checkpoint* a, const Checkpoint* b) {
              if (a->step != b->step) return a->step < b->step;
              return a->dev_score < b->dev_score;
            });

  // Mean as base + sum(deltas)/k rather than sum/k: identical checkpoints
  // produce all-zero deltas, so their average is bit-identical to the input
  // (plain sum/k is off by an ulp for values like 0.1 at k = 3).
  Checkpoint mean = *ordered.front();
  std::vector<std::vector<double>> deltas(mean.tensors.size());
  for (size_t t = 0; t < mean.tensors.size(); ++t)
    deltas[t].assign(mean.tensors[t].value.v.size(), 0.0);
  for (size_t c = 1; c < ordered.size(); ++c) {
    for (size_t t = 0; t < mean.tensors.size(); ++t) {
      const io::NamedTensor& other = ordered[c]->tensors[t];
      const io::NamedTensor& base = mean.tensors[t];
      CNTM_CHECK(other.name == base.name &&
                     other.value.shape == base.value.shape,
                 ErrorKind::kData,
                 "checkpoint tensor mismatch at " + base.name);
      for (size_t k = 0; k < base.value.v.size(); ++k)
        deltas[t][k] += other.value.v[k] - base.value.v[k];
    }
    mean.step = std::max(mean.step, ordered[c]->step);
    mean.dev_score = std::min(mean.dev_score, ordered[c]->dev_score);
  }
  const double inv = 1.0 / double(ordered.size());
  for (size_t t = 0; t < mean.tensors.size(); ++t)
    for (size_t k = 0; k < mean.tensors[t].value.v.size(); ++k)
      mean.tensors[t].value.v[k] += deltas[t][k] * inv;
  return mean;
}

int64_t model_vocab(data::TaskKind task, int64_t task_vocab) {
  CNTM_CHECK(task_vocab >= 1, ErrorKind::kConfig,
             "task vocabulary must be nonempty");
  const int64_t sep = task == data::TaskKind::kRepeatCopy ? 1 : 0;
  return kSpecialTokens + task_vocab + sep;
}

std::vector<int64_t> shifted_tokens(const std::vector<int64_t>& raw) {
  std::vector<int64_t> out;
  out.reserve(raw.size());
  for (int64_t t : raw) out.push_back(t + kSpecialTokens);
  return out;
}

ag::Array<double> one_hot_rows(const std::vector<int64_t>& shifted,
                               int64_t vocab) {
  ag::Array<double> x({int64_t(shifted.size()), vocab});
  for (size_t i = 0; i < shifted.size(); ++i) {
    CNTM_CHECK(shifted[i] >= 0 && shifted[i] < vocab, ErrorKind::kData,
               "token outside the model vocabulary");
    x.at(int64_t(i), shifted[i]) = 1.0;
  }
  return x;
}

ItemLoss item_loss(ag::Graph<double>& g, nn::Model<double>& model,
                   const data::Utterance& utt, data::TaskKind task,
                   int64_t task_vocab, const nn::ObjectiveConfig& obj) {
  const int64_t vocab = model_vocab(task, task_vocab);
  CNTM_CHECK(model.cfg.encoder.input_dim == vocab, ErrorKind::kConfig,
             "encoder input width does not match the task vocabulary");
  CNTM_CHECK(model.cfg.decoder.vocab_size == vocab, ErrorKind::kConfig,
             "decoder vocabulary does not match the task vocabulary");
  const std::vector<int64_t> input = shifted_tokens(
      data::input_for_target(task, utt.tokens, task_vocab));
  const std::vector<int64_t> target = shifted_tokens(utt.tokens);

  ag::Var<double> o =
      model.encode_sequence(g, g.input(one_hot_rows(input, vocab)));
  ag::Var<double> logits = nn::decode_train(g, model.decoder, o, target);
  std::vector<int64_t> target_out = target;
  target_out.push_back(model.cfg.decoder.eos);
  ag::Var<double> att =
      nn::attention_loss(g, logits, target_out, obj.label_smoothing);

  ItemLoss item{att, false};
  const int64_t frames = o.shape()[0];
  if (obj.ctc_weight > 0.0 && frames >= nn::ctc_min_frames(target)) {
    ag::Var<double> ctc =
        nn::ctc_loss(g, model.ctc_logits(g, o), target, obj.blank);
    item.loss = nn::joint_loss(att, ctc, obj.ctc_weight);
    item.used_ctc = true;
  }
  return item;
}

BatchLoss batch_loss(ag::Graph<double>& g, nn::Model<double>& model,
                     const data::Corpus& corpus,
                     const std::vector<size_t>& batch, data::TaskKind task,
                     int64_t task_vocab, const nn::ObjectiveConfig& obj) {
  CNTM_CHECK(!batch.empty(), ErrorKind::kDomain, "empty batch");
  BatchLoss out;
  out.items = int64_t(batch.size());
  bool first = true;
  ag::Var<double> total;
  for (size_t idx : batch) {
    const ItemLoss item =
        item_loss(g, model, corpus.at(idx), task, task_vocab, obj);
    if (!item.used_ctc) ++out.ctc_skipped;
    total = first ? item.loss : ag::add(total, item.loss);
    first = false;
  }
  out.loss = ag::scale(total, 1.0 / double(batch.size()));
  return out;
}

double dev_loss(nn::Model<double>& model, const data::Corpus& corpus,
                data::TaskKind task, int64_t task_vocab,
                const nn::ObjectiveConfig& obj) {
  CNTM_CHECK(!corpus.empty(), ErrorKind::kDomain,
             "dev evaluation needs a nonempty corpus");
  double total = 0.0;
  for (const auto& utt : corpus) {
    ag::Graph<double> g(false);
    total += item_loss(g, model, utt, task, task_vocab, obj).loss.value().v[0];
  }
  return total / double(corpus.size());
}

double token_accuracy(nn::Model<double>& model, const data::Corpus& corpus,
                      data::TaskKind task, int64_t task_vocab) {
  CNTM_CHECK(!corpus.empty(), ErrorKind::kDomain,
             "accuracy needs a nonempty corpus");
  const int64_t vocab = model_vocab(task, task_vocab);
  int64_t errors = 0, ref_units = 0;
  for (const auto& utt : corpus) {
    const std::vector<int64_t> input = shifted_tokens(
        data::input_for_target(task, utt.tokens, task_vocab));
    const std::vector<int64_t> target = shifted_tokens(utt.tokens);
    const nn::DecodeResult hyp =
        nn::model_greedy_decode(model, one_hot_rows(input, vocab));
    errors += eval::edit_distance(target, hyp.tokens).distance;
    ref_units += int64_t(target.size());
  }
  return 1.0 - double(errors) / double(ref_units);
}

std::vector<std::vector<size_t>> pack_batches(
    const data::Corpus& corpus, const std::vector<size_t>& order,
    int64_t batch_bins) {
  CNTM_CHECK(batch_bins >= 1, ErrorKind::kConfig,
             "batch_bins must be at least 1");
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> current;
  int64_t cost = 0;
  for (size_t idx : order) {
    const int64_t len = int64_t(corpus.at(idx).tokens.size());
    if (!current.empty() && cost + len > batch_bins) {
      batches.push_back(std::move(current));
      current.clear();
      cost = 0;
    }
    current.push_back(idx);
    cost += len;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

namespace {

std::string log_line(int64_t step, double lr, double train_loss,
                     const char* dev) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld\t%.10g\t%.10g\t%s",
                static_cast<long long>(step), lr, train_loss, dev);
  return std::string(buf);
}

void shuffle_indices(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = size_t(rng.uniform_int(0, int64_t(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

TrainResult train(nn::Model<double>& model, const data::Corpus& train_corpus,
                  const data::Corpus& dev_corpus, data::TaskKind task,
                  int64_t task_vocab, const nn::ObjectiveConfig& obj,
                  const TrainConfig& cfg, const std::string& log_path) {
  cfg.validate();
  obj.validate();
  CNTM_CHECK(!train_corpus.empty(), ErrorKind::kDomain,
             "training corpus is empty");

  TrainResult result;
  const std::vector<ag::Parameter<double>*> params = model.parameters();
  AdamState adam = make_adam_state(params);
  std::vector<Checkpoint> history;

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::app);
    CNTM_CHECK(log.is_open(), ErrorKind::kData,
               "cannot open metrics log: " + log_path);
  }
  const auto emit = [&](const std::string& line) {
    result.log_lines.push_back(line);
    if (log.is_open()) log << line << '\n' << std::flush;
  };

  int64_t step = 0;
  double last_train = 0.0;
  std::vector<size_t> order(train_corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, "train/shuffle/" + std::to_string(epoch));
    shuffle_indices(order, shuffle_rng);
    const auto batches = pack_batches(train_corpus, order, cfg.batch_bins);
    for (const auto& batch : batches) {
      ++step;
      const double lr = lr_at(step, cfg.peak_lr, cfg.warmup_steps);
      ag::Graph<double> g(true);
      const BatchLoss bl =
          batch_loss(g, model, train_corpus, batch, task, task_vocab, obj);
      result.ctc_skipped += bl.ctc_skipped;
      last_train = bl.loss.value().v[0];
      if (!std::isfinite(last_train)) {
        save_checkpoint(cfg.dump_path, snapshot(model, step, last_train));
        throw_numeric("training diverged at step " + std::to_string(step) +
                      "; state dumped to " + cfg.dump_path);
      }
      for (auto* p : params) p->zero_grad();
      g.backward(bl.loss);
      clip_global_norm(params, cfg.clip_norm);
      adam_step(params, adam, lr, cfg);
      emit(log_line(step, lr, last_train, "-"));
    }
    const double dev = dev_loss(model, dev_corpus, task, task_vocab, obj);
    result.epoch_dev.push_back(dev);
    char devtext[32];
    std::snprintf(devtext, sizeof(devtext), "%.10g", dev);
    emit(log_line(step, lr_at(std::max<int64_t>(step, 1), cfg.peak_lr,
                              cfg.warmup_steps),
                  last_train, devtext));
    history.push_back(snapshot(model, step, dev));
    history = keep_best_k(std::move(history), cfg.keep_best_k);
  }

  result.steps = step;
  result.final_checkpoint = checkpoint_average(history);
  result.best_dev = history.front().dev_score;
  for (const auto& c : history)
    result.best_dev = std::min(result.best_dev, c.dev_score);
  return result;
}

}  // namespace cntm::train
