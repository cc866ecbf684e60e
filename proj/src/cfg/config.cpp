/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "cfg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "ntm/bridge.hpp"
#include "ntm/memory.hpp"

namespace cntm::cfg {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

int64_t parse_i64(std::string_view key, std::string_view v) {
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  CNTM_CHECK(ec == std::errc() && ptr == v.data() + v.size(),
             ErrorKind::kConfig,
             "key " + std::string(key) + ": not an integer: '" +
                 std::string(v) + "'");
  return out;
}

double parse_f64(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  CNTM_CHECK(ec == std::errc() && ptr == v.data() + v.size(),
             ErrorKind::kConfig,
             "key " + std::string(key) + ": not a number: '" + std::string(v) +
                 "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorKind::kConfig, "key " + std::string(key) +
                                      ": expected true or false, got '" +
                                      std::string(v) + "'");
}

std::string fmt_i64(int64_t x) { return std::to_string(x); }

// Shortest decimal that parses back to the same double, so a dumped config
// reloads to the identical value and re-dumps to the identical bytes.
std::string fmt_f64(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  CNTM_CHECK(ec == std::errc(), ErrorKind::kNumeric,
             "could not format a number");
  return std::string(buf, ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

Entry i64_entry(const char* key, int64_t RunConfig::*field) {
  return {key,
          [key, field](RunConfig& c, std::string_view v) {
            c.*field = parse_i64(key, v);
          },
          [field](const RunConfig& c) { return fmt_i64(c.*field); }};
}

Entry f64_entry(const char* key, double RunConfig::*field) {
  return {key,
          [key, field](RunConfig& c, std::string_view v) {
            c.*field = parse_f64(key, v);
          },
          [field](const RunConfig& c) { return fmt_f64(c.*field); }};
}

Entry bool_entry(const char* key, bool RunConfig::*field) {
  return {key,
          [key, field](RunConfig& c, std::string_view v) {
            c.*field = parse_bool(key, v);
          },
          [field](const RunConfig& c) { return fmt_bool(c.*field); }};
}

Entry token_entry(const char* key, std::string RunConfig::*field,
                  std::initializer_list<std::string_view> allowed) {
  std::vector<std::string> allow(allowed.begin(), allowed.end());
  return {key,
          [key, allow, field](RunConfig& c, std::string_view v) {
            std::string msg;
            for (const auto& a : allow) {
              if (v == a) {
                c.*field = std::string(v);
                return;
              }
            }
            msg = "key " + std::string(key) + ": expected one of {";
            for (size_t i = 0; i < allow.size(); ++i) {
              if (i) msg += ", ";
              msg += allow[i];
            }
            msg += "}, got '" + std::string(v) + "'";
            throw Error(ErrorKind::kConfig, msg);
          },
          [field](const RunConfig& c) { return c.*field; }};
}

// One row per documented key, kept sorted so dump() is canonical.
const std::vector<Entry>& registry() {
  static const std::vector<Entry> table = {
      token_entry("bridge.order", &RunConfig::bridge_order,
                  {"write-first", "read-first"}),
      i64_entry("bridge.read_heads", &RunConfig::bridge_read_heads),
      i64_entry("bridge.write_heads", &RunConfig::bridge_write_heads),
      i64_entry("eval.beam", &RunConfig::eval_beam),
      i64_entry("eval.long_k", &RunConfig::eval_long_k),
      i64_entry("model.conv_kernel", &RunConfig::model_conv_kernel),
      i64_entry("model.d_model", &RunConfig::model_d_model),
      i64_entry("model.dec_blocks", &RunConfig::model_dec_blocks),
      i64_entry("model.dec_ff", &RunConfig::model_dec_ff),
      i64_entry("model.enc_blocks", &RunConfig::model_enc_blocks),
      i64_entry("model.enc_ff", &RunConfig::model_enc_ff),
      i64_entry("model.heads", &RunConfig::model_heads),
      i64_entry("model.max_target_len", &RunConfig::model_max_target_len),
      bool_entry("model.subsample", &RunConfig::model_subsample),
      i64_entry("ntm.cols", &RunConfig::ntm_cols),
      token_entry("ntm.init", &RunConfig::ntm_init, {"constant", "learned"}),
      i64_entry("ntm.rows", &RunConfig::ntm_rows),
      token_entry("ntm.sharpen", &RunConfig::ntm_sharpen,
                  {"softmax", "power"}),
      i64_entry("ntm.shift_radius", &RunConfig::ntm_shift_radius),
      i64_entry("task.count", &RunConfig::task_count),
      i64_entry("task.group_hi", &RunConfig::task_group_hi),
      i64_entry("task.group_lo", &RunConfig::task_group_lo),
      token_entry("task.kind", &RunConfig::task_kind,
                  {"copy", "repeat-copy"}),
      i64_entry("task.len_hi", &RunConfig::task_len_hi),
      i64_entry("task.len_lo", &RunConfig::task_len_lo),
      i64_entry("task.repeats_hi", &RunConfig::task_repeats_hi),
      i64_entry("task.repeats_lo", &RunConfig::task_repeats_lo),
      i64_entry("task.vocab", &RunConfig::task_vocab),
      i64_entry("train.batch_bins", &RunConfig::train_batch_bins),
      f64_entry("train.clip_norm", &RunConfig::train_clip_norm),
      f64_entry("train.ctc_weight", &RunConfig::train_ctc_weight),
      i64_entry("train.epochs", &RunConfig::train_epochs),
      i64_entry("train.keep_best_k", &RunConfig::train_keep_best_k),
      f64_entry("train.label_smoothing", &RunConfig::train_label_smoothing),
      f64_entry("train.peak_lr", &RunConfig::train_peak_lr),
      i64_entry("train.seed", &RunConfig::train_seed),
      i64_entry("train.warmup_steps", &RunConfig::train_warmup_steps),
      f64_entry("train.weight_decay", &RunConfig::train_weight_decay),
  };
  return table;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const Entry& e : registry()) {
    if (key == e.key) {
      e.set(*this, value);
      return;
    }
  }
  throw Error(ErrorKind::kConfig, "unknown config key: " + std::string(key));
}

std::string RunConfig::dump() const {
  std::string out;
  for (const Entry& e : registry()) {
    out += e.key;
    out += " = ";
    out += e.get(*this);
    out += '\n';
  }
  return out;
}

void RunConfig::validate() const {
  CNTM_CHECK(task_vocab >= 1, ErrorKind::kConfig,
             "task.vocab must be positive");
  // The builders run the per-module validators, instantiated at the io width
  // this very config would produce for its task.
  (void)model_config(train::model_vocab(task(), task_vocab), true);
  (void)train_config();
  objective().validate();
  CNTM_CHECK(1 <= task_len_lo && task_len_lo <= task_len_hi &&
                 task_len_hi <= 512,
             ErrorKind::kConfig, "task length range must be within [1, 512]");
  CNTM_CHECK(task_count >= 0, ErrorKind::kConfig,
             "task.count must be nonnegative");
  CNTM_CHECK(1 <= task_repeats_lo && task_repeats_lo <= task_repeats_hi,
             ErrorKind::kConfig, "task repeat range is malformed");
  CNTM_CHECK(1 <= task_group_lo && task_group_lo <= task_group_hi,
             ErrorKind::kConfig, "task group range is malformed");
  CNTM_CHECK(eval_beam >= 1, ErrorKind::kConfig, "eval.beam must be >= 1");
  CNTM_CHECK(eval_long_k >= 1, ErrorKind::kConfig,
             "eval.long_k must be >= 1");
  CNTM_CHECK(ntm_shift_radius >= 0, ErrorKind::kConfig,
             "ntm.shift_radius must be >= 0");
}

data::TaskKind RunConfig::task() const {
  if (task_kind == "copy") return data::TaskKind::kCopy;
  if (task_kind == "repeat-copy") return data::TaskKind::kRepeatCopy;
  throw Error(ErrorKind::kConfig, "unknown task kind: " + task_kind);
}

nn::ModelConfig RunConfig::model_config(int64_t io_width,
                                        bool use_memory) const {
  nn::ModelConfig m;
  m.encoder.input_dim = io_width;
  m.encoder.d_model = model_d_model;
  m.encoder.n_blocks = model_enc_blocks;
  m.encoder.n_heads = model_heads;
  m.encoder.ff_dim = model_enc_ff;
  m.encoder.conv_kernel = model_conv_kernel;
  m.encoder.subsample = model_subsample;
  m.decoder.vocab_size = io_width;
  m.decoder.d_model = model_d_model;
  m.decoder.n_blocks = model_dec_blocks;
  m.decoder.n_heads = model_heads;
  m.decoder.ff_dim = model_dec_ff;
  m.decoder.max_target_len = model_max_target_len;
  m.bridge.d_model = model_d_model;
  m.bridge.mem.rows = ntm_rows;
  m.bridge.mem.cols = ntm_cols;
  m.bridge.mem.shifts.clear();
  for (int64_t s = -ntm_shift_radius; s <= ntm_shift_radius; ++s) {
    m.bridge.mem.shifts.push_back(s);
  }
  m.bridge.mem.sharpen_mode = ntm::parse_sharpen_mode(ntm_sharpen);
  m.bridge.mem.init_scheme = ntm::parse_init_scheme(ntm_init);
  m.bridge.order = ntm::parse_step_order(bridge_order);
  m.bridge.read_heads = bridge_read_heads;
  m.bridge.write_heads = bridge_write_heads;
  m.use_memory = use_memory;
  m.validate();
  return m;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.peak_lr = train_peak_lr;
  t.warmup_steps = train_warmup_steps;
  t.weight_decay = train_weight_decay;
  t.epochs = train_epochs;
  t.batch_bins = train_batch_bins;
  t.keep_best_k = train_keep_best_k;
  t.clip_norm = train_clip_norm;
  t.seed = train_seed;
  t.validate();
  return t;
}

nn::ObjectiveConfig RunConfig::objective() const {
  nn::ObjectiveConfig o;
  o.ctc_weight = train_ctc_weight;
  o.label_smoothing = train_label_smoothing;
  o.validate();
  return o;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> seen;
  size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    const size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    CNTM_CHECK(eq != std::string_view::npos, ErrorKind::kConfig,
               "config line " + std::to_string(line_no) +
                   ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    CNTM_CHECK(!key.empty(), ErrorKind::kConfig,
               "config line " + std::to_string(line_no) + ": empty key");
    CNTM_CHECK(seen.insert(key).second, ErrorKind::kConfig,
               "config line " + std::to_string(line_no) + ": duplicate key " +
                   key);
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CNTM_CHECK(in.is_open(), ErrorKind::kConfig,
             "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  CNTM_CHECK(out.is_open(), ErrorKind::kConfig,
             "cannot write config file: " + path);
  out << cfg.dump();
  CNTM_CHECK(out.good(), ErrorKind::kConfig,
             "failed writing config file: " + path);
}

}  // namespace cntm::cfg
