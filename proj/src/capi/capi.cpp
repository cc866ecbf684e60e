/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "cntm/cntm.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "cfg/config.hpp"
#include "check/battery.hpp"
#include "common/error.hpp"
#include "run/driver.hpp"

using cntm::Error;
using cntm::ErrorKind;

struct cntm_config {
  cntm::cfg::RunConfig impl;
};

namespace {

thread_local std::string g_last_error;

cntm_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return CNTM_ERR_USAGE;
    case ErrorKind::kConfig:
      return CNTM_ERR_CONFIG;
    case ErrorKind::kShape:
      return CNTM_ERR_SHAPE;
    case ErrorKind::kDomain:
      return CNTM_ERR_DOMAIN;
    case ErrorKind::kData:
      return CNTM_ERR_DATA;
    case ErrorKind::kNumeric:
      return CNTM_ERR_NUMERIC;
  }
  return CNTM_ERR_PANIC;
}

// Runs the body, translating exceptions into statuses and the thread-local
// message. Never lets an exception cross the C boundary.
template <class F>
cntm_status guarded(F&& body) {
  try {
    body();
    return CNTM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CNTM_ERR_PANIC;
  } catch (...) {
    g_last_error = "unknown internal failure";
    return CNTM_ERR_PANIC;
  }
}

// C-owned copy of a string, released by cntm_string_free.
char* copy_out(const std::string& s) {
  char* mem = static_cast<char*>(std::malloc(s.size() + 1));
  if (mem == nullptr) throw std::bad_alloc();
  std::memcpy(mem, s.c_str(), s.size() + 1);
  return mem;
}

void set_out(char** slot, const std::string& value) {
  if (slot != nullptr) *slot = copy_out(value);
}

void require(bool cond, const char* what) {
  if (!cond) throw Error(ErrorKind::kUsage, what);
}

}  // namespace

extern "C" {

int cntm_status_exit_code(cntm_status status) {
  switch (status) {
    case CNTM_OK:
      return 0;
    case CNTM_ERR_USAGE:
    case CNTM_ERR_CONFIG:
      return 1;
    case CNTM_ERR_SHAPE:
    case CNTM_ERR_DOMAIN:
    case CNTM_ERR_DATA:
      return 2;
    case CNTM_ERR_NUMERIC:
    case CNTM_ERR_PANIC:
      return 3;
  }
  return 3;
}

const char* cntm_last_error(void) { return g_last_error.c_str(); }

void cntm_string_free(char* s) { std::free(s); }

cntm_status cntm_config_new(cntm_config** out) {
  return guarded([&] {
    require(out != nullptr, "cntm_config_new: out is NULL");
    *out = new cntm_config();
  });
}

cntm_status cntm_config_load(const char* path, cntm_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr,
            "cntm_config_load: NULL argument");
    auto loaded = new cntm_config{cntm::cfg::load_config(path)};
    *out = loaded;
  });
}

cntm_status cntm_config_set(cntm_config* cfg, const char* key,
                            const char* value) {
  return guarded([&] {
    require(cfg != nullptr && key != nullptr && value != nullptr,
            "cntm_config_set: NULL argument");
    cfg->impl.set(key, value);
  });
}

cntm_status cntm_config_dump(const cntm_config* cfg, char** out) {
  return guarded([&] {
    require(cfg != nullptr && out != nullptr,
            "cntm_config_dump: NULL argument");
    *out = copy_out(cfg->impl.dump());
  });
}

cntm_status cntm_config_save(const cntm_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg != nullptr && path != nullptr,
            "cntm_config_save: NULL argument");
    cntm::cfg::save_config(path, cfg->impl);
  });
}

cntm_status cntm_config_validate(const cntm_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "cntm_config_validate: cfg is NULL");
    cfg->impl.validate();
  });
}

void cntm_config_free(cntm_config* cfg) { delete cfg; }

cntm_status cntm_gen_data(const cntm_config* cfg, uint64_t seed,
                          const char* out_dir, char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr && out_dir != nullptr,
            "cntm_gen_data: NULL argument");
    set_out(summary_out, cntm::run::gen_bench(cfg->impl, seed, out_dir));
  });
}

cntm_status cntm_gen_split(const cntm_config* cfg, uint64_t seed,
                           const char* out_path, const char* split, int64_t k,
                           char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr && out_path != nullptr && split != nullptr,
            "cntm_gen_split: NULL argument");
    set_out(summary_out,
            cntm::run::gen_split(cfg->impl, seed, out_path, split, k));
  });
}

cntm_status cntm_train(const cntm_config* cfg, int use_memory, uint64_t seed,
                       const char* train_path, const char* dev_path,
                       const char* ckpt_out, const char* log_out,
                       char** summary_out) {
  return guarded([&] {
    require(cfg != nullptr && train_path != nullptr && dev_path != nullptr &&
                ckpt_out != nullptr,
            "cntm_train: NULL argument");
    set_out(summary_out,
            cntm::run::train_run(cfg->impl, use_memory != 0, seed, train_path,
                                 dev_path, ckpt_out,
                                 log_out == nullptr ? "" : log_out));
  });
}

cntm_status cntm_eval(const cntm_config* cfg, int use_memory,
                      const char* ckpt_path, const char* data_dir,
                      const char* baseline_tsv, char** tsv_out,
                      char** text_out) {
  return guarded([&] {
    require(cfg != nullptr && ckpt_path != nullptr && data_dir != nullptr,
            "cntm_eval: NULL argument");
    const cntm::run::EvalOutcome outcome = cntm::run::eval_run(
        cfg->impl, use_memory != 0, ckpt_path, data_dir,
        baseline_tsv == nullptr ? "" : baseline_tsv);
    set_out(tsv_out, outcome.tsv);
    set_out(text_out, outcome.text);
  });
}

cntm_status cntm_report(const char* const* tsv_paths, size_t n_paths,
                        const char* baseline_tsv, char** text_out) {
  return guarded([&] {
    require(tsv_paths != nullptr && n_paths > 0,
            "cntm_report: no input paths");
    std::vector<std::string> paths;
    for (size_t i = 0; i < n_paths; ++i) {
      require(tsv_paths[i] != nullptr, "cntm_report: NULL path");
      paths.emplace_back(tsv_paths[i]);
    }
    set_out(text_out,
            cntm::run::report_run(
                paths, baseline_tsv == nullptr ? "" : baseline_tsv));
  });
}

cntm_status cntm_gradcheck(const char* only, uint64_t seed, int rounds,
                           int inject_bug, char** table_out,
                           int* all_passed_out) {
  return guarded([&] {
    cntm::check::BatteryOptions opt;
    if (only != nullptr) opt.only = only;
    opt.seed = seed;
    opt.rounds = rounds;
    opt.inject_bug = inject_bug != 0;
    const cntm::check::BatteryReport report = cntm::check::run_battery(opt);
    set_out(table_out, report.table());
    if (all_passed_out != nullptr)
      *all_passed_out = report.all_passed() ? 1 : 0;
  });
}

cntm_status cntm_gradcheck_suites(char** out) {
  return guarded([&] {
    require(out != nullptr, "cntm_gradcheck_suites: out is NULL");
    std::string text;
    for (const std::string& s : cntm::check::battery_suites()) {
      text += s;
      text += '\n';
    }
    *out = copy_out(text);
  });
}

cntm_status cntm_param_count(const cntm_config* cfg, int use_memory,
                             int64_t* out) {
  return guarded([&] {
    require(cfg != nullptr && out != nullptr,
            "cntm_param_count: NULL argument");
    *out = cntm::run::param_count(cfg->impl, use_memory != 0);
  });
}

}  // extern "C"
