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

#include "ag/ops.hpp"

namespace cntm::ntm {

// Sharpening comes in two flavors. kSoftmax renormalizes the powered weights
// through a softmax; with max(w) < 1 and large gamma this flattens toward
// uniform, which is intentional, documented behavior of that variant. kPower
// divides by the sum of powers instead and genuinely sharpens as gamma grows.
enum class SharpenMode { kSoftmax, kPower };

enum class InitScheme { kConstant, kLearned };

inline SharpenMode parse_sharpen_mode(std::string_view s) {
  if (s == "softmax") return SharpenMode::kSoftmax;
  if (s == "power") return SharpenMode::kPower;
  throw Error(ErrorKind::kConfig, "unknown sharpen mode: " + std::string(s));
}

inline InitScheme parse_init_scheme(std::string_view s) {
  if (s == "constant") return InitScheme::kConstant;
  if (s == "learned") return InitScheme::kLearned;
  throw Error(ErrorKind::kConfig, "unknown memory init scheme: " + std::string(s));
}

struct MemoryConfig {
  int64_t rows = 32;  // N memory locations
  int64_t cols = 8;   // W slot width
  std::vector<int64_t> shifts = {-1, 0, 1};
  SharpenMode sharpen_mode = SharpenMode::kSoftmax;
  InitScheme init_scheme = InitScheme::kConstant;

  int64_t shift_count() const { return int64_t(shifts.size()); }
};

// Cosine denominator guard; keeps addressing defined on near-zero rows.
inline constexpr double kCosineDelta = 1e-8;
// Keeps x^gamma differentiable at x = 0 (the exponent gradient needs log x).
inline constexpr double kSharpenEps = 1e-12;
// Keeps beta strictly positive after softplus.
inline constexpr double kBetaEps = 1e-6;

// Raw projection widths per head: key (W) + beta/gate/gamma (3) + shift
// slots, and the write head adds erase (W) and add (W) on top.
inline int64_t read_raw_size(int64_t cols, int64_t shift_count) {
  return cols + 3 + shift_count;
}
inline int64_t write_raw_size(int64_t cols, int64_t shift_count) {
  return 3 * cols + 3 + shift_count;
}

// One head's control signals, squashed into their valid ranges and living on
// the caller's tape.
template <class Real>
struct HeadEmissions {
  ag::Var<Real> key;    // W, unconstrained
  ag::Var<Real> beta;   // scalar > 0
  ag::Var<Real> gate;   // scalar in (0,1)
  ag::Var<Real> shift;  // simplex over the shift set
  ag::Var<Real> gamma;  // scalar >= 1
  ag::Var<Real> erase;  // W in (0,1), write heads only
  ag::Var<Real> add;    // W, write heads only
  bool is_write = false;
};

// All four addressing stages, exposed for inspection and tests.
template <class Real>
struct AddressingWeights {
  ag::Var<Real> content;  // w^c
  ag::Var<Real> gated;    // w^g
  ag::Var<Real> shifted;  // w*
  ag::Var<Real> final;    // w
};

// Slice a raw projection vector into squashed head controls. Layout:
// key | beta | gate | shift | gamma [| erase | add].
template <class Real>
HeadEmissions<Real> split_emissions(ag::Var<Real> raw, const MemoryConfig& cfg,
                                    bool is_write) {
  const int64_t W = cfg.cols, S = cfg.shift_count();
  const int64_t want = is_write ? write_raw_size(W, S) : read_raw_size(W, S);
  CNTM_CHECK(raw.shape().size() == 1 && raw.numel() == want, ErrorKind::kShape,
             "head projection has " + std::to_string(raw.numel()) +
                 " values, expected " + std::to_string(want));
  HeadEmissions<Real> em;
  em.is_write = is_write;
  em.key = ag::slice_vec(raw, 0, W);
  em.beta = ag::add_scalar(ag::softplus(ag::slice_vec(raw, W, W + 1)),
                           Real(kBetaEps));
  em.gate = ag::sigmoid(ag::slice_vec(raw, W + 1, W + 2));
  em.shift = ag::softmax(ag::slice_vec(raw, W + 2, W + 2 + S));
  em.gamma = ag::add_scalar(
      ag::softplus(ag::slice_vec(raw, W + 2 + S, W + 3 + S)), Real(1));
  if (is_write) {
    em.erase = ag::sigmoid(ag::slice_vec(raw, W + 3 + S, 2 * W + 3 + S));
    em.add = ag::tanh_op(ag::slice_vec(raw, 2 * W + 3 + S, 3 * W + 3 + S));
  }
  return em;
}

// Per-head feedforward from an encoder frame to head controls.
template <class Real>
HeadEmissions<Real> emit_heads(ag::Var<Real> h, ag::Var<Real> weight,
                               ag::Var<Real> bias, const MemoryConfig& cfg,
                               bool is_write) {
  CNTM_CHECK(h.shape().size() == 1 && weight.shape().size() == 2 &&
                 h.numel() == weight.shape()[0],
             ErrorKind::kShape, "head projection input dimension mismatch");
  ag::Var<Real> raw = ag::add(ag::matmul(h, weight), bias);
  return split_emissions(raw, cfg, is_write);
}

// w^c = softmax(beta * cos(k, M_i)) over memory rows.
template <class Real>
ag::Var<Real> content_weights(ag::Var<Real> key, ag::Var<Real> beta,
                              ag::Var<Real> memory) {
  ag::Var<Real> sims = ag::cosine_rows(memory, key, Real(kCosineDelta));
  return ag::softmax(ag::mul_scalar(sims, beta));
}

// w^g = g * w^c + (1 - g) * w_prev
template <class Real>
ag::Var<Real> interpolate(ag::Var<Real> content, ag::Var<Real> w_prev,
                          ag::Var<Real> gate) {
  ag::Var<Real> keep = ag::add_scalar(ag::scale(gate, Real(-1)), Real(1));
  return ag::add(ag::mul_scalar(content, gate), ag::mul_scalar(w_prev, keep));
}

template <class Real>
ag::Var<Real> sharpen(ag::Var<Real> w_star, ag::Var<Real> gamma,
                      SharpenMode mode) {
  ag::Var<Real> powered =
      ag::pow_var(ag::add_scalar(w_star, Real(kSharpenEps)), gamma);
  switch (mode) {
    case SharpenMode::kSoftmax:
      return ag::softmax(powered);
    case SharpenMode::kPower:
      return ag::div_scalar(powered, ag::sum_all(powered));
  }
  throw Error(ErrorKind::kConfig, "unknown sharpen mode");
}

// content -> interpolate -> circular shift -> sharpen
template <class Real>
AddressingWeights<Real> address(const HeadEmissions<Real>& em,
                                ag::Var<Real> memory, ag::Var<Real> w_prev,
                                const MemoryConfig& cfg) {
  AddressingWeights<Real> aw;
  aw.content = content_weights(em.key, em.beta, memory);
  aw.gated = interpolate(aw.content, w_prev, em.gate);
  aw.shifted = ag::circular_conv(aw.gated, em.shift, cfg.shifts);
  aw.final = sharpen(aw.shifted, em.gamma, cfg.sharpen_mode);
  return aw;
}

// r = sum_i w(i) M(i)
template <class Real>
ag::Var<Real> read(ag::Var<Real> memory, ag::Var<Real> w) {
  return ag::matmul(w, memory);
}

// Erase then add: M'(i) = M(i) (1 - w(i) e), M''(i) = M'(i) + w(i) a.
template <class Real>
ag::Var<Real> write(ag::Var<Real> memory, ag::Var<Real> w, ag::Var<Real> erase,
                    ag::Var<Real> add) {
  const int64_t N = memory.shape()[0], W = memory.shape()[1];
  CNTM_CHECK(w.numel() == N && erase.numel() == W && add.numel() == W,
             ErrorKind::kShape, "write: operand sizes do not match memory");
  ag::Var<Real> col = ag::reshape(w, {N, 1});
  ag::Var<Real> we = ag::matmul(col, ag::reshape(erase, {1, W}));
  ag::Var<Real> keep = ag::add_scalar(ag::scale(we, Real(-1)), Real(1));
  ag::Var<Real> erased = ag::mul(memory, keep);
  ag::Var<Real> wa = ag::matmul(col, ag::reshape(add, {1, W}));
  return ag::add(erased, wa);
}

// Starting values for the memory matrix and the per-head previous weights.
// kConstant pins them; kLearned uses these same values to seed trainable
// parameters (the weight vector is kept as raw logits and softmaxed on use).
template <class Real>
struct MemoryInit {
  ag::Array<Real> memory;  // N x W
  ag::Array<Real> w_prev;  // N, already on the simplex for kConstant
};

template <class Real>
MemoryInit<Real> init_memory(int64_t rows, int64_t cols, InitScheme scheme) {
  CNTM_CHECK(rows >= 2 && cols >= 1, ErrorKind::kConfig,
             "memory needs at least 2 rows and 1 column");
  MemoryInit<Real> init;
  init.memory = ag::Array<Real>::full({rows, cols}, Real(1e-6));
  switch (scheme) {
    case InitScheme::kConstant:
      init.w_prev = ag::Array<Real>::zeros({rows});
      init.w_prev.v[0] = Real(1);
      return init;
    case InitScheme::kLearned:
      // Raw logits; all zero softmaxes to uniform.
      init.w_prev = ag::Array<Real>::zeros({rows});
      return init;
  }
  throw Error(ErrorKind::kConfig, "unknown memory init scheme");
}

}  // namespace cntm::ntm
