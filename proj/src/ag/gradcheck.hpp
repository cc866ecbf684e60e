/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ag/graph.hpp"

namespace cntm::ag {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Corrupt the first analytic gradient entry before comparing. Used as a
  // negative control: a healthy checker must flag the corruption.
  bool inject_bug = false;
};

struct GradMismatch {
  std::string param;
  int64_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradReport {
  int64_t checked = 0;
  double max_rel_err = 0;
  std::string worst_param;
  int64_t worst_index = 0;
  std::vector<GradMismatch> failures;
  bool nan_seen = false;

  bool ok() const { return failures.empty() && !nan_seen; }

  std::string summary() const {
    std::ostringstream os;
    os << (ok() ? "OK" : "FAIL") << " checked=" << checked
       << " max_rel_err=" << max_rel_err;
    if (!worst_param.empty())
      os << " worst=" << worst_param << "[" << worst_index << "]";
    if (nan_seen) os << " (NaN encountered)";
    for (size_t i = 0; i < failures.size() && i < 8; ++i) {
      const GradMismatch& f = failures[i];
      os << "\n  " << f.param << "[" << f.index << "] analytic=" << f.analytic
         << " numeric=" << f.numeric << " rel_err=" << f.rel_err;
    }
    if (failures.size() > 8)
      os << "\n  ... " << (failures.size() - 8) << " more";
    return os.str();
  }
};

inline double relative_error(double a, double n) {
  double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
  return std::fabs(a - n) / denom;
}

// Compare analytic parameter gradients against central finite differences of
// a scalar loss.
//
// `run(with_grad)` must rebuild the computation from the current parameter
// values each call and return the loss value. When `with_grad` is true it
// must also backprop, leaving gradients accumulated into the parameters
// (zeroed first by this function); when false it must not touch gradients.
// Use Real = double; float loses too many digits for the default tolerance.
template <class Real>
GradReport grad_check(std::vector<Parameter<Real>*> params,
                      const std::function<Real(bool with_grad)>& run,
                      const GradCheckOptions& opt = {}) {
  GradReport rep;
  for (Parameter<Real>* p : params) p->zero_grad();

  Real loss0 = run(true);
  if (std::isnan(double(loss0))) rep.nan_seen = true;

  bool bug_pending = opt.inject_bug;
  const Real eps = Real(opt.epsilon);
  for (Parameter<Real>* p : params) {
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double analytic = double(p->grad.v[size_t(i)]);
      if (bug_pending) {
        analytic += 1.0;
        bug_pending = false;
      }
      Real saved = p->value.v[size_t(i)];
      p->value.v[size_t(i)] = saved + eps;
      Real lp = run(false);
      p->value.v[size_t(i)] = saved - eps;
      Real lm = run(false);
      p->value.v[size_t(i)] = saved;
      double numeric = (double(lp) - double(lm)) / (2.0 * double(eps));
      if (std::isnan(double(lp)) || std::isnan(double(lm))) rep.nan_seen = true;
      double e = relative_error(analytic, numeric);
      ++rep.checked;
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst_param = p->name;
        rep.worst_index = i;
      }
      if (e > opt.tolerance || std::isnan(e))
        rep.failures.push_back({p->name, i, analytic, numeric, e});
    }
  }
  return rep;
}

}  // namespace cntm::ag
