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

#include "nn/decoder.hpp"
#include "nn/encoder.hpp"
#include "ntm/bridge.hpp"

// The assembled network: conformer-style encoder, optional memory bridge,
// transformer decoder, and a linear head for frame-level alignment logits.
// Without the memory the bridge is an identity pass-through, giving the
// baseline for comparisons.
namespace cntm::nn {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  ntm::BridgeConfig bridge;
  bool use_memory = true;

  void validate() const {
    encoder.validate();
    decoder.validate();
    CNTM_CHECK(encoder.d_model == decoder.d_model, ErrorKind::kConfig,
               "encoder and decoder widths must match");
    if (use_memory) {
      CNTM_CHECK(bridge.d_model == encoder.d_model, ErrorKind::kConfig,
                 "bridge width must match the encoder");
      bridge.validate();
    }
  }
};

template <class Real>
struct Model {
  ModelConfig cfg;
  EncoderParams<Real> encoder;
  std::optional<ntm::BridgeParams<Real>> bridge;
  DecoderParams<Real> decoder;
  LinearParams<Real> ctc_head;

  Model(const ModelConfig& c, uint64_t seed)
      : cfg((c.validate(), c)),
        encoder(c.encoder, seed, "enc"),
        decoder(c.decoder, seed, "dec"),
        ctc_head(c.encoder.d_model, c.decoder.vocab_size, seed, "ctc") {
    if (cfg.use_memory) bridge.emplace(cfg.bridge, seed, "bridge");
  }

  void collect(std::vector<ag::Parameter<Real>*>& p) {
    encoder.collect(p);
    if (bridge) bridge->collect(p);
    decoder.collect(p);
    ctc_head.collect(p);
  }

  std::vector<ag::Parameter<Real>*> parameters() {
    std::vector<ag::Parameter<Real>*> p;
    collect(p);
    return p;
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (auto* p : parameters()) n += p->numel();
    return n;
  }

  // Architecture hash over parameter names and extents; checkpoints store it
  // so weights are never loaded into a mismatched model.
  uint64_t fingerprint() {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t x) {
      for (int i = 0; i < 8; ++i) {
        h ^= (x >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    };
    for (auto* p : parameters()) {
      h ^= Rng::fnv1a(p->name);
      h *= 0x100000001b3ULL;
      mix(uint64_t(p->value.rank()));
      for (int64_t e : p->value.shape) mix(uint64_t(e));
    }
    return h;
  }

  // Encoder plus bridge: features in, decoder-ready sequence out.
  ag::Var<Real> encode_sequence(ag::Graph<Real>& g, ag::Var<Real> x) {
    ag::Var<Real> h = encode(g, encoder, x);
    return bridge ? ntm::bridge_sequence(g, *bridge, h) : h;
  }

  // Per-frame vocab logits for the alignment branch; tapped after the
  // bridge so the memory is trained by both branches.
  ag::Var<Real> ctc_logits(ag::Graph<Real>& g, ag::Var<Real> memory_out) {
    return ctc_head.apply(g, memory_out);
  }
};

// Run the full pipeline without recording and decode greedily.
template <class Real>
DecodeResult model_greedy_decode(Model<Real>& model,
                                 const ag::Array<Real>& features,
                                 int64_t max_len = -1) {
  ag::Graph<Real> g(false);
  ag::Array<Real> o =
      model.encode_sequence(g, g.input(features)).value();
  return greedy_decode(model.decoder, o, max_len);
}

template <class Real>
std::vector<Hypothesis> model_beam_decode(Model<Real>& model,
                                          const ag::Array<Real>& features,
                                          int64_t beam_size,
                                          int64_t max_len = -1) {
  ag::Graph<Real> g(false);
  ag::Array<Real> o =
      model.encode_sequence(g, g.input(features)).value();
  return beam_decode(model.decoder, o, beam_size, max_len);
}

}  // namespace cntm::nn
