/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#ifndef CNTM_CHECK_BATTERY_HPP_
#define CNTM_CHECK_BATTERY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ag/gradcheck.hpp"

namespace cntm::check {

// One finite-difference comparison: a named computation rebuilt from scratch
// around each parameter perturbation.
struct CaseResult {
  std::string suite;
  std::string name;
  ag::GradReport report;
  double tolerance = 0;
  bool passed = false;
};

struct BatteryReport {
  std::vector<CaseResult> cases;

  bool all_passed() const;
  int64_t failures() const;
  // Aligned text table, one row per case, with a closing summary line.
  std::string table() const;
};

struct BatteryOptions {
  std::string only;         // run a single suite by name; empty = all
  uint64_t seed = 1;        // master seed for the random restarts
  int rounds = 3;           // restarts per primitive-level case
  bool inject_bug = false;  // corrupt analytic gradients (negative control)
};

// Suite names accepted by BatteryOptions::only, in execution order.
const std::vector<std::string>& battery_suites();

// Runs the analytic-vs-central-difference battery in double precision:
// every tape primitive, the four-stage addressing pipeline, a multi-step
// memory rollout, the aligner loss, and an assembled toy model.
BatteryReport run_battery(const BatteryOptions& opt);

}  // namespace cntm::check

#endif  // CNTM_CHECK_BATTERY_HPP_
