/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ag/graph.hpp"
#include "ag/ops.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"

// Building blocks shared by the encoder and decoder: linear layers, layer
// norm with learned gain and bias, sinusoidal positions, multi-head
// attention, and the conformer feedforward and convolution modules.
namespace cntm::nn {

// Additive mask value; exp(kMaskValue - max) underflows to exactly zero.
inline constexpr double kMaskValue = -1e30;

template <class Real>
ag::Array<Real> gaussian_init(std::vector<int64_t> shape, int64_t fan_in,
                              uint64_t seed, const std::string& name) {
  Rng rng(seed, name);
  ag::Array<Real> a(std::move(shape));
  Real stddev = Real(1) / std::sqrt(Real(fan_in > 0 ? fan_in : 1));
  for (Real& x : a.v) x = Real(rng.normal()) * stddev;
  return a;
}

// Sinusoidal positions: even columns sine, odd columns cosine, wavelengths
// geometric from 2*pi to 10000*2*pi.
template <class Real>
ag::Array<Real> sinusoid_table(int64_t len, int64_t dim) {
  CNTM_CHECK(len >= 1 && dim >= 1, ErrorKind::kShape,
             "sinusoid table needs positive extents");
  ag::Array<Real> pe({len, dim});
  for (int64_t t = 0; t < len; ++t)
    for (int64_t i = 0; i < dim; i += 2) {
      double angle = double(t) * std::exp(-std::log(10000.0) * double(i) /
                                          double(dim));
      pe.at(t, i) = Real(std::sin(angle));
      if (i + 1 < dim) pe.at(t, i + 1) = Real(std::cos(angle));
    }
  return pe;
}

// Upper-triangular additive mask: position i may not attend to j > i.
template <class Real>
ag::Array<Real> causal_mask(int64_t len) {
  ag::Array<Real> m({len, len});
  for (int64_t i = 0; i < len; ++i)
    for (int64_t j = i + 1; j < len; ++j) m.at(i, j) = Real(kMaskValue);
  return m;
}

template <class Real>
struct LinearParams {
  ag::Parameter<Real> w, b;
  bool has_bias;

  LinearParams(int64_t in, int64_t out, uint64_t seed, const std::string& name,
               bool with_bias = true)
      : w(name + ".w", gaussian_init<Real>({in, out}, in, seed, name + ".w")),
        b(name + ".b", ag::Array<Real>::zeros({with_bias ? out : 0})),
        has_bias(with_bias) {}

  void collect(std::vector<ag::Parameter<Real>*>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x) {
    ag::Var<Real> y = ag::matmul(x, g.param(w));
    return has_bias ? ag::add_rowvec(y, g.param(b)) : y;
  }
};

template <class Real>
struct LayerNormParams {
  ag::Parameter<Real> gain, bias;

  LayerNormParams(int64_t dim, const std::string& name)
      : gain(name + ".gain", ag::Array<Real>::full({dim}, Real(1))),
        bias(name + ".bias", ag::Array<Real>::zeros({dim})) {}

  void collect(std::vector<ag::Parameter<Real>*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x) {
    return ag::add_rowvec(
        ag::mul_rowvec(ag::layer_norm_rows(x), g.param(gain)), g.param(bias));
  }
};

// Multi-head scaled dot-product attention over row-major sequences. The same
// module serves self-attention (queries = keys) and cross-attention.
template <class Real>
struct AttentionParams {
  int64_t n_heads;
  LinearParams<Real> wq, wk, wv, wo;

  AttentionParams(int64_t d_model, int64_t heads, uint64_t seed,
                  const std::string& name)
      : n_heads(heads),
        wq(d_model, d_model, seed, name + ".q"),
        // no key bias: softmax rows are invariant to a shared key offset,
        // so such a parameter would be permanently gradient-free
        wk(d_model, d_model, seed, name + ".k", false),
        wv(d_model, d_model, seed, name + ".v"),
        wo(d_model, d_model, seed, name + ".o") {
    CNTM_CHECK(heads >= 1 && d_model % heads == 0, ErrorKind::kConfig,
               "attention dimension must be divisible by the head count");
  }

  void collect(std::vector<ag::Parameter<Real>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }

  // mask, when given, is an additive Tq x Tk matrix already in the graph.
  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> queries,
                      ag::Var<Real> keys_values,
                      const ag::Var<Real>* mask = nullptr) {
    int64_t d = queries.shape()[1];
    int64_t dk = d / n_heads;
    ag::Var<Real> q = wq.apply(g, queries);
    ag::Var<Real> k = wk.apply(g, keys_values);
    ag::Var<Real> v = wv.apply(g, keys_values);

    ag::Var<Real> merged;
    for (int64_t h = 0; h < n_heads; ++h) {
      ag::Var<Real> qh = ag::slice_cols(q, h * dk, (h + 1) * dk);
      ag::Var<Real> kh = ag::slice_cols(k, h * dk, (h + 1) * dk);
      ag::Var<Real> vh = ag::slice_cols(v, h * dk, (h + 1) * dk);
      ag::Var<Real> scores = ag::scale(ag::matmul(qh, ag::transpose(kh)),
                                       Real(1) / std::sqrt(Real(dk)));
      if (mask != nullptr) scores = ag::add(scores, *mask);
      ag::Var<Real> head = ag::matmul(ag::softmax(scores), vh);
      merged = h == 0 ? head : ag::concat_cols(merged, head);
    }
    return wo.apply(g, merged);
  }
};

// Position-wise feedforward: expand, swish, contract.
template <class Real>
struct FeedForwardParams {
  LinearParams<Real> in, out;

  FeedForwardParams(int64_t d_model, int64_t ff_dim, uint64_t seed,
                    const std::string& name)
      : in(d_model, ff_dim, seed, name + ".in"),
        out(ff_dim, d_model, seed, name + ".out") {}

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    in.collect(p);
    out.collect(p);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x) {
    return out.apply(g, ag::swish(in.apply(g, x)));
  }
};

// Conformer convolution module: pointwise expansion, gated linear unit,
// depthwise temporal convolution, layer norm (batch-independent stand-in
// for the usual batch norm), swish, pointwise contraction.
template <class Real>
struct ConvModuleParams {
  LinearParams<Real> pointwise_in;
  ag::Parameter<Real> depthwise_w, depthwise_b;
  LayerNormParams<Real> norm;
  LinearParams<Real> pointwise_out;

  ConvModuleParams(int64_t d_model, int64_t kernel, uint64_t seed,
                   const std::string& name)
      : pointwise_in(d_model, 2 * d_model, seed, name + ".pw_in"),
        depthwise_w(name + ".dw.w", gaussian_init<Real>({kernel, d_model},
                                                        kernel, seed,
                                                        name + ".dw.w")),
        depthwise_b(name + ".dw.b", ag::Array<Real>::zeros({d_model})),
        norm(d_model, name + ".norm"),
        pointwise_out(d_model, d_model, seed, name + ".pw_out") {
    CNTM_CHECK(kernel >= 1 && kernel % 2 == 1, ErrorKind::kConfig,
               "depthwise conv kernel must be odd");
  }

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    pointwise_in.collect(p);
    p.push_back(&depthwise_w);
    p.push_back(&depthwise_b);
    norm.collect(p);
    pointwise_out.collect(p);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x) {
    int64_t d = x.shape()[1];
    ag::Var<Real> expanded = pointwise_in.apply(g, x);
    ag::Var<Real> gated =
        ag::mul(ag::slice_cols(expanded, 0, d),
                ag::sigmoid(ag::slice_cols(expanded, d, 2 * d)));
    ag::Var<Real> conv = ag::add_rowvec(
        ag::depthwise_conv_time(gated, g.param(depthwise_w)),
        g.param(depthwise_b));
    return pointwise_out.apply(g, ag::swish(norm.apply(g, conv)));
  }
};

// Macaron conformer block: two half-step feedforwards sandwich
// self-attention and the convolution module, all pre-normed with residuals,
// with a closing layer norm.
template <class Real>
struct ConformerBlockParams {
  LayerNormParams<Real> ff1_norm, attn_norm, conv_norm, ff2_norm, final_norm;
  FeedForwardParams<Real> ff1, ff2;
  AttentionParams<Real> attn;
  ConvModuleParams<Real> conv;

  ConformerBlockParams(int64_t d_model, int64_t heads, int64_t ff_dim,
                       int64_t kernel, uint64_t seed, const std::string& name)
      : ff1_norm(d_model, name + ".ff1_norm"),
        attn_norm(d_model, name + ".attn_norm"),
        conv_norm(d_model, name + ".conv_norm"),
        ff2_norm(d_model, name + ".ff2_norm"),
        final_norm(d_model, name + ".final_norm"),
        ff1(d_model, ff_dim, seed, name + ".ff1"),
        ff2(d_model, ff_dim, seed, name + ".ff2"),
        attn(d_model, heads, seed, name + ".attn"),
        conv(d_model, kernel, seed, name + ".conv") {}

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    ff1_norm.collect(p);
    attn_norm.collect(p);
    conv_norm.collect(p);
    ff2_norm.collect(p);
    final_norm.collect(p);
    ff1.collect(p);
    ff2.collect(p);
    attn.collect(p);
    conv.collect(p);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x) {
    x = ag::add(x, ag::scale(ff1.apply(g, ff1_norm.apply(g, x)), Real(0.5)));
    ag::Var<Real> normed = attn_norm.apply(g, x);
    x = ag::add(x, attn.apply(g, normed, normed));
    x = ag::add(x, conv.apply(g, conv_norm.apply(g, x)));
    x = ag::add(x, ag::scale(ff2.apply(g, ff2_norm.apply(g, x)), Real(0.5)));
    return final_norm.apply(g, x);
  }
};

// Pre-norm transformer decoder block: causal self-attention, cross-attention
// over the encoder-side sequence, then a relu feedforward.
template <class Real>
struct TransformerBlockParams {
  LayerNormParams<Real> self_norm, cross_norm, ff_norm;
  AttentionParams<Real> self_attn, cross_attn;
  LinearParams<Real> ff_in, ff_out;

  TransformerBlockParams(int64_t d_model, int64_t heads, int64_t ff_dim,
                         uint64_t seed, const std::string& name)
      : self_norm(d_model, name + ".self_norm"),
        cross_norm(d_model, name + ".cross_norm"),
        ff_norm(d_model, name + ".ff_norm"),
        self_attn(d_model, heads, seed, name + ".self"),
        cross_attn(d_model, heads, seed, name + ".cross"),
        ff_in(d_model, ff_dim, seed, name + ".ff_in"),
        ff_out(ff_dim, d_model, seed, name + ".ff_out") {}

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    self_norm.collect(p);
    cross_norm.collect(p);
    ff_norm.collect(p);
    self_attn.collect(p);
    cross_attn.collect(p);
    ff_in.collect(p);
    ff_out.collect(p);
  }

  ag::Var<Real> apply(ag::Graph<Real>& g, ag::Var<Real> x,
                      ag::Var<Real> enc_out, const ag::Var<Real>& mask) {
    ag::Var<Real> normed = self_norm.apply(g, x);
    x = ag::add(x, self_attn.apply(g, normed, normed, &mask));
    x = ag::add(x, cross_attn.apply(g, cross_norm.apply(g, x), enc_out));
    x = ag::add(x, ff_out.apply(g, ag::relu(ff_in.apply(g, ff_norm.apply(g, x)))));
    return x;
  }
};

}  // namespace cntm::nn
