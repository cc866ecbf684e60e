/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

// Command line front end. Everything goes through the C API in cntm/cntm.h;
// this file owns flag parsing, output, and exit codes only.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "cntm/cntm.h"

namespace {

// Owning wrapper for strings returned by the library.
struct OutString {
  char* ptr = nullptr;
  ~OutString() { cntm_string_free(ptr); }
  std::string str() const { return ptr == nullptr ? "" : ptr; }
};

struct ConfigHandle {
  cntm_config* ptr = nullptr;
  ~ConfigHandle() { cntm_config_free(ptr); }
};

// Prints the library error and converts the status to a process exit code.
int fail(cntm_status status) {
  std::fprintf(stderr, "error: %s\n", cntm_last_error());
  return cntm_status_exit_code(status);
}

// Options shared by the data/model commands. Precedence: defaults, then
// --config file, then --set overrides, then dedicated flags.
struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string dump_config_path;
  uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "Configuration file (section.key = value lines)");
  cmd->add_option("--set", opts.sets,
                  "Override one key, e.g. --set train.epochs=3 (repeatable)")
      ->expected(-1);
  cmd->add_option("--seed", opts.seed, "Master seed (default 1)");
  cmd->add_option("--dump-config", opts.dump_config_path,
                  "Write the effective configuration to this path");
}

// Builds the effective config; returns CNTM_OK or the first failure.
cntm_status build_config(const CommonOpts& opts,
                         const std::vector<std::pair<std::string, std::string>>&
                             flag_sets,
                         ConfigHandle& out) {
  cntm_status st = opts.config_path.empty()
                       ? cntm_config_new(&out.ptr)
                       : cntm_config_load(opts.config_path.c_str(), &out.ptr);
  if (st != CNTM_OK) return st;
  for (const std::string& kv : opts.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      // Surface through the library so the message channel is uniform.
      st = cntm_config_set(out.ptr, kv.c_str(), "");
      if (st == CNTM_OK) st = CNTM_ERR_USAGE;
      return st;
    }
    st = cntm_config_set(out.ptr, kv.substr(0, eq).c_str(),
                         kv.substr(eq + 1).c_str());
    if (st != CNTM_OK) return st;
  }
  for (const auto& [key, value] : flag_sets) {
    st = cntm_config_set(out.ptr, key.c_str(), value.c_str());
    if (st != CNTM_OK) return st;
  }
  if (!opts.dump_config_path.empty()) {
    st = cntm_config_save(out.ptr, opts.dump_config_path.c_str());
    if (st != CNTM_OK) return st;
  }
  return cntm_config_validate(out.ptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "cntm: a memory-augmented encoder-decoder for length-generalization "
      "benchmarks"};
  app.require_subcommand(1);

  // ---- gen-data -----------------------------------------------------------
  auto* gen = app.add_subcommand(
      "gen-data", "Generate synthetic task corpora (benchmark or one split)");
  CommonOpts gen_opts;
  add_common(gen, gen_opts);
  std::string gen_task, gen_split_rule, gen_out = "data", gen_out_file;
  int64_t gen_count = -1, gen_vocab = -1, gen_k = 100;
  gen->add_option("--task", gen_task, "Task kind: copy or repeat-copy");
  gen->add_option("--count", gen_count, "Training utterance count");
  gen->add_option("--vocab", gen_vocab, "Task vocabulary size");
  gen->add_option("--out", gen_out, "Output directory (default: data)");
  gen->add_option("--split", gen_split_rule,
                  "Write one file under a split rule instead of the "
                  "benchmark: full, longest-k, concat-longest-k");
  gen->add_option("--k", gen_k, "Subset size for the longest-k rules");
  gen->add_option("--out-file", gen_out_file,
                  "Output path in --split mode (default: <out>/<split>.tsv)");

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  CommonOpts train_opts;
  add_common(train, train_opts);
  std::string train_memory = "ntm", train_in = "data/train.tsv",
              train_dev = "data/dev.tsv", train_ckpt = "model.cntm",
              train_log = "metrics.log";
  train->add_option("--memory", train_memory,
                    "ntm (memory bridge) or none (identity baseline)")
      ->check(CLI::IsMember({"ntm", "none"}));
  train->add_option("--train", train_in, "Training corpus TSV");
  train->add_option("--dev", train_dev, "Validation corpus TSV");
  train->add_option("--ckpt", train_ckpt, "Checkpoint output path");
  train->add_option("--log", train_log,
                    "Metrics log output path (empty to skip)");

  // ---- eval ---------------------------------------------------------------
  auto* eval = app.add_subcommand(
      "eval", "Decode and score the test splits against a checkpoint");
  CommonOpts eval_opts;
  add_common(eval, eval_opts);
  std::string eval_memory = "ntm", eval_ckpt = "model.cntm",
              eval_data = "data", eval_baseline, eval_out_tsv;
  eval->add_option("--memory", eval_memory,
                   "ntm (memory bridge) or none (identity baseline)")
      ->check(CLI::IsMember({"ntm", "none"}));
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint to evaluate");
  eval->add_option("--data", eval_data,
                   "Directory holding test-full/test-long/test-very-long");
  eval->add_option("--baseline", eval_baseline,
                   "Previous report TSV to compute relative reductions "
                   "against");
  eval->add_option("--out-tsv", eval_out_tsv,
                   "Also write the machine-readable report here");

  // ---- gradcheck ----------------------------------------------------------
  auto* grad = app.add_subcommand(
      "gradcheck", "Compare analytic gradients against finite differences");
  std::string grad_only;
  uint64_t grad_seed = 1;
  int grad_rounds = 3;
  bool grad_inject = false, grad_list = false;
  grad->add_option("--only", grad_only, "Run a single suite by name");
  grad->add_option("--seed", grad_seed, "Master seed (default 1)");
  grad->add_option("--rounds", grad_rounds,
                   "Random restarts per primitive case (default 3)");
  grad->add_flag("--inject-bug", grad_inject,
                 "Corrupt analytic gradients (negative control; must fail)");
  grad->add_flag("--list", grad_list, "List suite names and exit");

  // ---- report -------------------------------------------------------------
  auto* report =
      app.add_subcommand("report", "Render saved evaluation report TSVs");
  std::vector<std::string> report_in;
  std::string report_baseline;
  report->add_option("--in", report_in, "Report TSV to render (repeatable)")
      ->expected(-1);
  report->add_option("--baseline", report_baseline,
                     "Report TSV to compute relative reductions against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    std::vector<std::pair<std::string, std::string>> flags;
    if (!gen_task.empty()) flags.emplace_back("task.kind", gen_task);
    if (gen_count >= 0)
      flags.emplace_back("task.count", std::to_string(gen_count));
    if (gen_vocab >= 0)
      flags.emplace_back("task.vocab", std::to_string(gen_vocab));
    ConfigHandle cfg;
    cntm_status st = build_config(gen_opts, flags, cfg);
    if (st != CNTM_OK) return fail(st);
    OutString summary;
    if (gen_split_rule.empty()) {
      st = cntm_gen_data(cfg.ptr, gen_opts.seed, gen_out.c_str(),
                         &summary.ptr);
    } else {
      const std::string path = gen_out_file.empty()
                                   ? gen_out + "/" + gen_split_rule + ".tsv"
                                   : gen_out_file;
      st = cntm_gen_split(cfg.ptr, gen_opts.seed, path.c_str(),
                          gen_split_rule.c_str(), gen_k, &summary.ptr);
    }
    if (st != CNTM_OK) return fail(st);
    std::fputs(summary.str().c_str(), stdout);
    return 0;
  }

  if (train->parsed()) {
    ConfigHandle cfg;
    cntm_status st = build_config(train_opts, {}, cfg);
    if (st != CNTM_OK) return fail(st);
    OutString summary;
    st = cntm_train(cfg.ptr, train_memory == "ntm" ? 1 : 0, train_opts.seed,
                    train_in.c_str(), train_dev.c_str(), train_ckpt.c_str(),
                    train_log.empty() ? nullptr : train_log.c_str(),
                    &summary.ptr);
    if (st != CNTM_OK) return fail(st);
    std::fputs(summary.str().c_str(), stdout);
    return 0;
  }

  if (eval->parsed()) {
    ConfigHandle cfg;
    cntm_status st = build_config(eval_opts, {}, cfg);
    if (st != CNTM_OK) return fail(st);
    OutString tsv, text;
    st = cntm_eval(cfg.ptr, eval_memory == "ntm" ? 1 : 0, eval_ckpt.c_str(),
                   eval_data.c_str(),
                   eval_baseline.empty() ? nullptr : eval_baseline.c_str(),
                   &tsv.ptr, &text.ptr);
    if (st != CNTM_OK) return fail(st);
    if (!eval_out_tsv.empty()) {
      std::FILE* f = std::fopen(eval_out_tsv.c_str(), "wb");
      if (f == nullptr) {
        std::fprintf(stderr, "error: cannot write %s\n", eval_out_tsv.c_str());
        return 2;
      }
      std::fputs(tsv.str().c_str(), f);
      std::fclose(f);
    }
    std::fputs(text.str().c_str(), stdout);
    return 0;
  }

  if (grad->parsed()) {
    if (grad_list) {
      OutString names;
      const cntm_status st = cntm_gradcheck_suites(&names.ptr);
      if (st != CNTM_OK) return fail(st);
      std::fputs(names.str().c_str(), stdout);
      return 0;
    }
    OutString table;
    int all_passed = 0;
    const cntm_status st = cntm_gradcheck(
        grad_only.empty() ? nullptr : grad_only.c_str(), grad_seed,
        grad_rounds, grad_inject ? 1 : 0, &table.ptr, &all_passed);
    if (st != CNTM_OK) return fail(st);
    std::fputs(table.str().c_str(), stdout);
    if (all_passed == 0) {
      std::fputs("gradient check FAILED\n", stderr);
      return 3;
    }
    return 0;
  }

  if (report->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(report_in.size());
    for (const std::string& p : report_in) paths.push_back(p.c_str());
    OutString text;
    const cntm_status st = cntm_report(
        paths.data(), paths.size(),
        report_baseline.empty() ? nullptr : report_baseline.c_str(),
        &text.ptr);
    if (st != CNTM_OK) return fail(st);
    std::fputs(text.str().c_str(), stdout);
    std::fputs("\n", stdout);
    return 0;
  }

  return 1;
}
