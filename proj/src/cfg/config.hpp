/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#ifndef CNTM_CFG_CONFIG_HPP_
#define CNTM_CFG_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "common/error.hpp"
#include "data/corpus.hpp"
#include "nn/losses.hpp"
#include "nn/model.hpp"
#include "train/trainer.hpp"

namespace cntm::cfg {

// Flat run configuration: every knob is one `section.key = value` line in a
// plain-text file ('#' starts a comment, keys may appear once). Defaults are
// the full-scale recipe where one is published (model widths, optimizer,
// memory geometry) and small task-bench values everywhere else.
struct RunConfig {
  // model.*
  int64_t model_d_model = 256;
  int64_t model_enc_blocks = 12;
  int64_t model_dec_blocks = 6;
  int64_t model_heads = 4;
  int64_t model_enc_ff = 1024;
  int64_t model_dec_ff = 2048;
  int64_t model_conv_kernel = 7;
  bool model_subsample = false;
  int64_t model_max_target_len = 512;

  // ntm.*
  int64_t ntm_rows = 256;
  int64_t ntm_cols = 10;
  int64_t ntm_shift_radius = 1;
  std::string ntm_sharpen = "softmax";  // softmax | power
  std::string ntm_init = "constant";    // constant | learned

  // bridge.*
  std::string bridge_order = "write-first";  // write-first | read-first
  int64_t bridge_read_heads = 1;
  int64_t bridge_write_heads = 1;

  // train.*
  double train_peak_lr = 0.002;
  int64_t train_warmup_steps = 15000;
  double train_weight_decay = 1e-6;
  int64_t train_batch_bins = 16000000;
  double train_ctc_weight = 0.3;
  double train_label_smoothing = 0.1;
  int64_t train_epochs = 10;
  int64_t train_keep_best_k = 10;
  double train_clip_norm = 5.0;
  int64_t train_seed = 1;

  // task.*
  std::string task_kind = "copy";  // copy | repeat-copy
  int64_t task_vocab = 16;
  int64_t task_len_lo = 1;
  int64_t task_len_hi = 8;
  int64_t task_count = 1000;
  int64_t task_repeats_lo = 1;
  int64_t task_repeats_hi = 4;
  int64_t task_group_lo = 2;
  int64_t task_group_hi = 4;

  // eval.*
  int64_t eval_beam = 1;
  int64_t eval_long_k = 100;

  // Assigns one key from its text form; unknown keys and unparseable values
  // are configuration errors.
  void set(std::string_view key, std::string_view value);

  // Canonical text form: every key, sorted, shortest round-trip number
  // rendering. dump() of a loaded dump() reproduces the bytes exactly.
  std::string dump() const;

  // Structural sanity of the whole bundle (delegates to the module configs).
  void validate() const;

  // Module-config builders. Token tasks drive the encoder with one-hot rows,
  // so the io width (model vocabulary) replaces any feature dimension.
  data::TaskKind task() const;
  nn::ModelConfig model_config(int64_t io_width, bool use_memory) const;
  train::TrainConfig train_config() const;
  nn::ObjectiveConfig objective() const;
  data::LenRange task_len() const { return {task_len_lo, task_len_hi}; }
  data::LenRange task_repeats() const {
    return {task_repeats_lo, task_repeats_hi};
  }
  data::LenRange task_groups() const { return {task_group_lo, task_group_hi}; }
};

// Parses config-file text (not a path): `key = value` lines, '#' comments,
// blank lines; keys must be unique within the text.
RunConfig parse_config(std::string_view text);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace cntm::cfg

#endif  // CNTM_CFG_CONFIG_HPP_
