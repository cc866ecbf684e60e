/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ag/ops.hpp"
#include "common/error.hpp"

// Training objective: label-smoothed cross-entropy on the attention branch,
// the log-space forward algorithm on the alignment branch, and their convex
// combination.
namespace cntm::nn {

// Log-domain stand-in for zero probability; safe under logaddexp.
inline constexpr double kLogZero = -1e30;

struct ObjectiveConfig {
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  int64_t blank = 3;

  void validate() const {
    CNTM_CHECK(ctc_weight >= 0.0 && ctc_weight <= 1.0, ErrorKind::kConfig,
               "ctc weight must lie in [0, 1]");
    CNTM_CHECK(label_smoothing >= 0.0 && label_smoothing < 1.0,
               ErrorKind::kConfig, "label smoothing must lie in [0, 1)");
    CNTM_CHECK(blank >= 0, ErrorKind::kConfig, "blank id must be nonnegative");
  }
};

// Mean per-position cross-entropy against targets mixed with the uniform
// distribution: q = (1 - eps) * onehot + eps / V.
template <class Real>
ag::Var<Real> attention_loss(ag::Graph<Real>& g, ag::Var<Real> logits,
                             const std::vector<int64_t>& targets,
                             double smoothing) {
  const auto& shape = logits.shape();
  CNTM_CHECK(shape.size() == 2 && shape[0] == int64_t(targets.size()),
             ErrorKind::kShape, "one logit row per target position required");
  CNTM_CHECK(smoothing >= 0.0 && smoothing < 1.0, ErrorKind::kConfig,
             "label smoothing must lie in [0, 1)");
  int64_t V = shape[1];
  std::vector<std::pair<int64_t, int64_t>> picks;
  picks.reserve(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) {
    CNTM_CHECK(targets[i] >= 0 && targets[i] < V, ErrorKind::kData,
               "target token outside the vocabulary");
    picks.emplace_back(int64_t(i), targets[i]);
  }
  ag::Var<Real> lp = ag::log_softmax(logits);
  ag::Var<Real> picked = ag::mean_all(ag::gather_elems(lp, std::move(picks)));
  ag::Var<Real> loss = ag::scale(picked, Real(smoothing - 1.0));
  if (smoothing > 0.0) {
    Real c = Real(-smoothing / double(V) / double(targets.size()));
    loss = ag::add(loss, ag::scale(ag::sum_all(lp), c));
  }
  return loss;
}

// Fewest frames that can align to y: every label needs a frame, and equal
// neighbours need a separating blank frame.
inline int64_t ctc_min_frames(const std::vector<int64_t>& y) {
  int64_t need = int64_t(y.size());
  for (size_t i = 1; i < y.size(); ++i)
    if (y[i] == y[i - 1]) ++need;
  return need;
}

// Negative log-probability of all blank-augmented alignments of y, by the
// forward algorithm over the blank-interleaved label sequence, entirely in
// log space on the tape.
template <class Real>
ag::Var<Real> ctc_loss(ag::Graph<Real>& g, ag::Var<Real> frame_logits,
                       const std::vector<int64_t>& y, int64_t blank) {
  const auto& shape = frame_logits.shape();
  CNTM_CHECK(shape.size() == 2, ErrorKind::kShape,
             "frame logits must be T x vocab");
  int64_t T = shape[0], V = shape[1];
  CNTM_CHECK(blank >= 0 && blank < V, ErrorKind::kConfig,
             "blank id outside the vocabulary");
  for (int64_t t : y) {
    CNTM_CHECK(t >= 0 && t < V, ErrorKind::kData,
               "target token outside the vocabulary");
    CNTM_CHECK(t != blank, ErrorKind::kData,
               "targets must not contain the blank");
  }
  CNTM_CHECK(T >= ctc_min_frames(y) && T >= 1, ErrorKind::kData,
             "infeasible alignment: too few frames for the target");

  // Extended labels: blank, y0, blank, y1, ..., blank.
  int64_t S = 2 * int64_t(y.size()) + 1;
  std::vector<int64_t> ext(size_t(S), blank);
  for (size_t i = 0; i < y.size(); ++i) ext[2 * i + 1] = y[i];

  // A skip from s-2 is allowed only onto a label differing from ext[s-2].
  ag::Array<Real> skip_mask({S}, Real(kLogZero));
  for (int64_t s = 2; s < S; ++s)
    if (ext[size_t(s)] != blank && ext[size_t(s)] != ext[size_t(s - 2)])
      skip_mask.v[size_t(s)] = Real(0);
  ag::Var<Real> skip = g.input(std::move(skip_mask));

  // Only the first two states may start.
  ag::Array<Real> start_mask({S}, Real(kLogZero));
  start_mask.v[0] = Real(0);
  if (S > 1) start_mask.v[1] = Real(0);

  ag::Var<Real> lp = ag::log_softmax(frame_logits);
  auto frame_terms = [&](int64_t t) {
    std::vector<std::pair<int64_t, int64_t>> rc;
    rc.reserve(size_t(S));
    for (int64_t s = 0; s < S; ++s) rc.emplace_back(t, ext[size_t(s)]);
    return ag::gather_elems(lp, std::move(rc));
  };

  ag::Var<Real> alpha =
      ag::add(frame_terms(0), g.input(std::move(start_mask)));
  for (int64_t t = 1; t < T; ++t) {
    ag::Var<Real> stay = alpha;
    ag::Var<Real> step = ag::shift_vec(alpha, 1, Real(kLogZero));
    ag::Var<Real> jump =
        ag::add(ag::shift_vec(alpha, 2, Real(kLogZero)), skip);
    alpha = ag::add(frame_terms(t),
                    ag::logaddexp(ag::logaddexp(stay, step), jump));
  }

  ag::Var<Real> total = ag::slice_vec(alpha, S - 1, S);
  if (S > 1)
    total = ag::logaddexp(total, ag::slice_vec(alpha, S - 2, S - 1));
  return ag::scale(total, Real(-1));
}

// Convex combination of the two branches.
template <class Real>
ag::Var<Real> joint_loss(ag::Var<Real> att, ag::Var<Real> ctc,
                         double lambda) {
  CNTM_CHECK(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kConfig,
             "ctc weight must lie in [0, 1]");
  return ag::add(ag::scale(ctc, Real(lambda)),
                 ag::scale(att, Real(1.0 - lambda)));
}

}  // namespace cntm::nn
