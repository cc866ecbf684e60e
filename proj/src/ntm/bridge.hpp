/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "common/rng.hpp"
#include "ntm/memory.hpp"

namespace cntm::ntm {

// Whether a timestep writes before it reads. The paper's wiring is exposed
// both ways because the within-step order is ambiguous; write-first is the
// default.
enum class StepOrder { kWriteFirst, kReadFirst };

inline StepOrder parse_step_order(std::string_view s) {
  if (s == "write-first") return StepOrder::kWriteFirst;
  if (s == "read-first") return StepOrder::kReadFirst;
  throw Error(ErrorKind::kConfig, "unknown bridge order: " + std::string(s));
}

struct BridgeConfig {
  int64_t d_model = 64;
  MemoryConfig mem;
  StepOrder order = StepOrder::kWriteFirst;
  int64_t read_heads = 1;
  int64_t write_heads = 1;

  void validate() const {
    CNTM_CHECK(d_model >= 1, ErrorKind::kConfig, "bridge d_model must be >= 1");
    CNTM_CHECK(read_heads >= 1 && write_heads >= 1, ErrorKind::kConfig,
               "bridge needs at least one read and one write head");
  }
};

// Learned tensors of the bridge: one projection per head, the output
// feedforward, and (for the learned init scheme) the memory start state.
template <class Real>
struct BridgeParams {
  BridgeConfig cfg;
  std::vector<ag::Parameter<Real>> write_w, write_b;
  std::vector<ag::Parameter<Real>> read_w, read_b;
  ag::Parameter<Real> out_w, out_b;
  ag::Parameter<Real> mem0;              // learned scheme only
  std::vector<ag::Parameter<Real>> w0;   // learned scheme: raw logits per head

  BridgeParams() = default;

  BridgeParams(const BridgeConfig& c, uint64_t seed, const std::string& prefix)
      : cfg(c) {
    cfg.validate();
    const int64_t d = cfg.d_model, W = cfg.mem.cols;
    const int64_t S = cfg.mem.shift_count();
    auto gaussian = [&](const std::string& name, std::vector<int64_t> shape,
                        double stddev) {
      ag::Array<Real> a(shape);
      Rng rng(seed, prefix + "/" + name);
      for (Real& x : a.v) x = Real(rng.normal(0.0, stddev));
      return ag::Parameter<Real>(prefix + "." + name, std::move(a));
    };
    double in_std = 1.0 / std::sqrt(double(d));
    for (int64_t h = 0; h < cfg.write_heads; ++h) {
      std::string tag = "write" + std::to_string(h);
      write_w.push_back(gaussian(tag + ".w", {d, write_raw_size(W, S)}, in_std));
      write_b.push_back(
          ag::Parameter<Real>(prefix + "." + tag + ".b",
                              ag::Array<Real>::zeros({write_raw_size(W, S)})));
    }
    for (int64_t h = 0; h < cfg.read_heads; ++h) {
      std::string tag = "read" + std::to_string(h);
      read_w.push_back(gaussian(tag + ".w", {d, read_raw_size(W, S)}, in_std));
      read_b.push_back(
          ag::Parameter<Real>(prefix + "." + tag + ".b",
                              ag::Array<Real>::zeros({read_raw_size(W, S)})));
    }
    int64_t concat_dim = d + cfg.read_heads * W;
    out_w = gaussian("out.w", {concat_dim, d}, 1.0 / std::sqrt(double(concat_dim)));
    out_b = ag::Parameter<Real>(prefix + ".out.b", ag::Array<Real>::zeros({d}));
    if (cfg.mem.init_scheme == InitScheme::kLearned) {
      auto init = init_memory<Real>(cfg.mem.rows, cfg.mem.cols, InitScheme::kLearned);
      mem0 = ag::Parameter<Real>(prefix + ".mem0", init.memory);
      for (int64_t h = 0; h < cfg.write_heads + cfg.read_heads; ++h)
        w0.push_back(ag::Parameter<Real>(prefix + ".w0." + std::to_string(h),
                                         init.w_prev));
    }
  }

  void collect(std::vector<ag::Parameter<Real>*>& out) {
    for (auto& p : write_w) out.push_back(&p);
    for (auto& p : write_b) out.push_back(&p);
    for (auto& p : read_w) out.push_back(&p);
    for (auto& p : read_b) out.push_back(&p);
    out.push_back(&out_w);
    out.push_back(&out_b);
    if (cfg.mem.init_scheme == InitScheme::kLearned) {
      out.push_back(&mem0);
      for (auto& p : w0) out.push_back(&p);
    }
  }
};

// Memory matrix plus one previous-weights vector per head, all tape values.
// Write heads come first in head_w, read heads after.
template <class Real>
struct BridgeState {
  ag::Var<Real> memory;
  std::vector<ag::Var<Real>> head_w;
};

template <class Real>
BridgeState<Real> bridge_init(ag::Graph<Real>& g, BridgeParams<Real>& params) {
  const BridgeConfig& cfg = params.cfg;
  BridgeState<Real> st;
  int64_t heads = cfg.write_heads + cfg.read_heads;
  if (cfg.mem.init_scheme == InitScheme::kLearned) {
    st.memory = g.param(params.mem0);
    for (int64_t h = 0; h < heads; ++h)
      st.head_w.push_back(ag::softmax(g.param(params.w0[size_t(h)])));
  } else {
    auto init = init_memory<Real>(cfg.mem.rows, cfg.mem.cols, InitScheme::kConstant);
    st.memory = g.input(init.memory);
    ag::Var<Real> w0 = g.input(init.w_prev);
    for (int64_t h = 0; h < heads; ++h) st.head_w.push_back(w0);
  }
  return st;
}

// Addressing stages per head for one step, exposed for tests.
template <class Real>
struct BridgeStepOut {
  BridgeState<Real> state;
  ag::Var<Real> output;
  std::vector<AddressingWeights<Real>> write_stages, read_stages;
};

template <class Real>
BridgeStepOut<Real> bridge_step(ag::Graph<Real>& g, BridgeParams<Real>& params,
                                const BridgeState<Real>& state,
                                ag::Var<Real> h) {
  const BridgeConfig& cfg = params.cfg;
  CNTM_CHECK(h.shape().size() == 1 && h.numel() == cfg.d_model,
             ErrorKind::kShape,
             "bridge input has " + std::to_string(h.numel()) +
                 " values, expected d_model = " + std::to_string(cfg.d_model));

  BridgeStepOut<Real> out;
  out.state = state;
  std::vector<ag::Var<Real>> reads;

  auto do_writes = [&] {
    for (int64_t hd = 0; hd < cfg.write_heads; ++hd) {
      auto em = emit_heads(h, g.param(params.write_w[size_t(hd)]),
                           g.param(params.write_b[size_t(hd)]), cfg.mem, true);
      auto aw = address(em, out.state.memory, out.state.head_w[size_t(hd)],
                        cfg.mem);
      out.state.memory = write(out.state.memory, aw.final, em.erase, em.add);
      out.state.head_w[size_t(hd)] = aw.final;
      out.write_stages.push_back(aw);
    }
  };
  auto do_reads = [&] {
    for (int64_t hd = 0; hd < cfg.read_heads; ++hd) {
      size_t slot = size_t(cfg.write_heads + hd);
      auto em = emit_heads(h, g.param(params.read_w[size_t(hd)]),
                           g.param(params.read_b[size_t(hd)]), cfg.mem, false);
      auto aw = address(em, out.state.memory, out.state.head_w[slot], cfg.mem);
      reads.push_back(read(out.state.memory, aw.final));
      out.state.head_w[slot] = aw.final;
      out.read_stages.push_back(aw);
    }
  };

  if (cfg.order == StepOrder::kWriteFirst) {
    do_writes();
    do_reads();
  } else {
    do_reads();
    do_writes();
  }

  ag::Var<Real> cat = h;
  for (ag::Var<Real> r : reads) cat = ag::concat_vec(cat, r);
  out.output = ag::add(ag::matmul(cat, g.param(params.out_w)),
                       g.param(params.out_b));
  return out;
}

// Fold bridge_step over the rows of h, returning the T x d_model outputs.
template <class Real>
ag::Var<Real> bridge_sequence(ag::Graph<Real>& g, BridgeParams<Real>& params,
                              ag::Var<Real> h) {
  CNTM_CHECK(h.shape().size() == 2, ErrorKind::kShape,
             "bridge_sequence expects a T x d_model matrix");
  int64_t T = h.shape()[0];
  CNTM_CHECK(T >= 1, ErrorKind::kDomain, "bridge_sequence needs T >= 1");
  BridgeState<Real> state = bridge_init(g, params);
  std::vector<ag::Var<Real>> outputs;
  outputs.reserve(size_t(T));
  for (int64_t t = 0; t < T; ++t) {
    auto step = bridge_step(g, params, state, ag::row_of(h, t));
    state = step.state;
    outputs.push_back(step.output);
  }
  return ag::stack_rows(outputs);
}

}  // namespace cntm::ntm
