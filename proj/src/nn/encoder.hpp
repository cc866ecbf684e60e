/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nn/layers.hpp"

// Conformer-style encoder: optional two-layer strided convolution frontend,
// linear projection, sinusoidal positions (an absolute stand-in for relative
// positions, accepted at this scale), a stack of macaron blocks, and a final
// layer norm.
namespace cntm::nn {

struct EncoderConfig {
  int64_t input_dim = 64;
  int64_t d_model = 64;
  int64_t n_blocks = 2;
  int64_t n_heads = 2;
  int64_t ff_dim = 128;
  int64_t conv_kernel = 7;
  bool subsample = false;

  void validate() const {
    CNTM_CHECK(input_dim >= 1 && d_model >= 1 && n_blocks >= 1 &&
                   ff_dim >= 1,
               ErrorKind::kConfig, "encoder extents must be positive");
    CNTM_CHECK(n_heads >= 1 && d_model % n_heads == 0, ErrorKind::kConfig,
               "encoder d_model must be divisible by n_heads");
    CNTM_CHECK(conv_kernel >= 1 && conv_kernel % 2 == 1, ErrorKind::kConfig,
               "encoder conv kernel must be odd");
  }
};

// Output length of one stride-2 kernel-3 unpadded convolution, applied twice.
inline int64_t subsampled_length(int64_t frames) {
  CNTM_CHECK(frames >= 7, ErrorKind::kDomain,
             "sequence too short to subsample (need at least 7 frames)");
  return ((frames - 1) / 2 - 1) / 2;
}

template <class Real>
struct EncoderParams {
  EncoderConfig cfg;
  // Engaged only when subsampling: two strided conv layers.
  std::optional<LinearParams<Real>> conv1, conv2;
  LinearParams<Real> proj;
  std::vector<ConformerBlockParams<Real>> blocks;
  LayerNormParams<Real> final_norm;

  EncoderParams(const EncoderConfig& c, uint64_t seed,
                const std::string& name)
      : cfg((c.validate(), c)),
        proj(c.subsample ? c.d_model : c.input_dim, c.d_model, seed,
             name + ".proj"),
        final_norm(c.d_model, name + ".final_norm") {
    if (cfg.subsample) {
      conv1.emplace(3 * cfg.input_dim, cfg.d_model, seed, name + ".conv1");
      conv2.emplace(3 * cfg.d_model, cfg.d_model, seed, name + ".conv2");
    }
    blocks.reserve(size_t(cfg.n_blocks));
    for (int64_t i = 0; i < cfg.n_blocks; ++i)
      blocks.emplace_back(cfg.d_model, cfg.n_heads, cfg.ff_dim,
                          cfg.conv_kernel, seed,
                          name + ".block" + std::to_string(i));
  }

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    if (conv1) conv1->collect(p);
    if (conv2) conv2->collect(p);
    proj.collect(p);
    for (auto& b : blocks) b.collect(p);
    final_norm.collect(p);
  }
};

// Strided convolution frontend plus the shared projection; reduces T frames
// to ((T-1)/2-1)/2 rows of width d_model.
template <class Real>
ag::Var<Real> subsample(ag::Graph<Real>& g, EncoderParams<Real>& params,
                        ag::Var<Real> x) {
  CNTM_CHECK(params.cfg.subsample, ErrorKind::kConfig,
             "encoder was built without a subsampling frontend");
  subsampled_length(x.shape()[0]);
  ag::Var<Real> h = ag::relu(params.conv1->apply(g, ag::unfold_time(x, 3, 2)));
  h = ag::relu(params.conv2->apply(g, ag::unfold_time(h, 3, 2)));
  return params.proj.apply(g, h);
}

template <class Real>
ag::Var<Real> encode(ag::Graph<Real>& g, EncoderParams<Real>& params,
                     ag::Var<Real> x) {
  const EncoderConfig& cfg = params.cfg;
  CNTM_CHECK(x.shape().size() == 2 && x.shape()[1] == cfg.input_dim,
             ErrorKind::kShape, "encoder input must be T x input_dim");
  ag::Var<Real> h = cfg.subsample ? subsample(g, params, x)
                                  : params.proj.apply(g, x);
  int64_t T = h.shape()[0];
  h = ag::add(h, g.input(sinusoid_table<Real>(T, cfg.d_model)));
  for (auto& block : params.blocks) h = block.apply(g, h);
  return params.final_norm.apply(g, h);
}

}  // namespace cntm::nn
