/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "check/battery.hpp"

#include <cstdio>
#include <functional>
#include <utility>

#include "ag/graph.hpp"
#include "ag/ops.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"
#include "nn/decoder.hpp"
#include "nn/losses.hpp"
#include "nn/model.hpp"
#include "ntm/bridge.hpp"
#include "ntm/memory.hpp"

namespace cntm::check {

namespace {

using A = ag::Array<double>;
using G = ag::Graph<double>;
using P = ag::Parameter<double>;
using V = ag::Var<double>;

P make_param(const std::string& name, std::vector<int64_t> shape, Rng& rng,
             double lo, double hi) {
  A init(shape);
  for (double& x : init.v) x = rng.uniform_real(lo, hi);
  return P(name, std::move(init));
}

// Magnitudes in [lo, hi] with random sign, staying clear of kinks at zero.
P make_param_signed(const std::string& name, std::vector<int64_t> shape,
                    Rng& rng, double lo, double hi) {
  A init(shape);
  for (double& x : init.v)
    x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform_real(lo, hi);
  return P(name, std::move(init));
}

// Scalar loss touching every output element. The weights depend only on the
// salt and the element count, so each rebuild inside one check sees the same
// loss function.
V weighted(G& g, V y, uint64_t salt) {
  A w;
  w.shape = y.shape();
  w.v.resize(y.value().v.size());
  Rng wrng(salt ^ (uint64_t(w.v.size()) << 32), "battery/weights");
  for (double& x : w.v) x = wrng.uniform_real(-1.0, 1.0);
  return ag::sum_all(ag::mul(y, g.input(std::move(w))));
}

class Battery {
 public:
  explicit Battery(const BatteryOptions& opt) : opt_(opt) {}

  BatteryReport take() { return std::move(report_); }

  void run_case(const char* suite, const std::string& name,
                std::vector<P*> params, const std::function<V(G&)>& fwd,
                double epsilon = 1e-5) {
    auto run = [&](bool with_grad) -> double {
      G g(with_grad);
      V loss = fwd(g);
      if (with_grad) g.backward(loss);
      return loss.value().v[0];
    };
    ag::GradCheckOptions gc;
    gc.epsilon = epsilon;
    gc.inject_bug = opt_.inject_bug;
    CaseResult r;
    r.suite = suite;
    r.name = name;
    r.report = ag::grad_check<double>(std::move(params), run, gc);
    r.tolerance = gc.tolerance;
    r.passed = r.report.ok();
    report_.cases.push_back(std::move(r));
  }

  // Every differentiable tape primitive, each from `rounds` random restarts.
  void primitives() {
    for (int round = 0; round < opt_.rounds; ++round) {
      const uint64_t seed = opt_.seed + uint64_t(round) * 1009;
      Rng rng(seed, "battery/primitives");
      const std::string tag = "#" + std::to_string(round);
      const char* suite = "numerics.primitives";

      auto simple = [&](const std::string& name, std::vector<P>& ps,
                        const std::function<V(G&)>& fwd) {
        std::vector<P*> ptrs;
        for (P& p : ps) ptrs.push_back(&p);
        run_case(suite, name + tag, ptrs, fwd);
      };

      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3, 4}, rng, -2, 2));
        ps.push_back(make_param("b", {3, 4}, rng, -2, 2));
        simple("add_sub_mul", ps, [&](G& g) {
          V s = ag::add(g.param(ps[0]), g.param(ps[1]));
          V d = ag::sub(g.param(ps[0]), g.param(ps[1]));
          return weighted(g, ag::mul(s, d), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {5}, rng, -2, 2));
        ps.push_back(make_param("s", {1}, rng, 1.5, 2.5));
        simple("scale_shift_div", ps, [&](G& g) {
          V y = ag::add_scalar(ag::scale(g.param(ps[0]), 1.7), 0.3);
          return weighted(g, ag::div_scalar(y, g.param(ps[1])), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {4}, rng, 0.5, 2.0));
        ps.push_back(make_param("p", {1}, rng, 1.2, 2.5));
        simple("pow_const_var", ps, [&](G& g) {
          V c = ag::pow_const(g.param(ps[0]), 1.5);
          V v = ag::pow_var(g.param(ps[0]), g.param(ps[1]));
          return weighted(g, ag::add(c, v), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {2, 3}, rng, -2, 2));
        ps.push_back(make_param("b", {3, 4}, rng, -2, 2));
        simple("matmul_mm", ps, [&](G& g) {
          return weighted(g, ag::matmul(g.param(ps[0]), g.param(ps[1])), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3}, rng, -2, 2));
        ps.push_back(make_param("b", {3, 4}, rng, -2, 2));
        ps.push_back(make_param("c", {4}, rng, -2, 2));
        simple("matmul_vm_mv_vv", ps, [&](G& g) {
          V vm = ag::matmul(g.param(ps[0]), g.param(ps[1]));
          V mv = ag::matmul(g.param(ps[1]), g.param(ps[2]));
          V vv = ag::matmul(vm, g.param(ps[2]));
          return ag::add(vv, ag::add(weighted(g, vm, seed),
                                     weighted(g, mv, seed ^ 1)));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3, 2}, rng, -2, 2));
        simple("transpose", ps, [&](G& g) {
          return weighted(g, ag::transpose(g.param(ps[0])), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {6}, rng, -3, 3));
        simple("sigmoid_tanh_softplus_swish", ps, [&](G& g) {
          V x = g.param(ps[0]);
          V y = ag::add(ag::sigmoid(x), ag::tanh_op(x));
          y = ag::add(y, ag::softplus(x));
          y = ag::add(y, ag::swish(x));
          return weighted(g, y, seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param_signed("a", {6}, rng, 0.2, 3.0));
        simple("relu", ps, [&](G& g) {
          return weighted(g, ag::relu(g.param(ps[0])), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {5}, rng, 0.3, 2.0));
        simple("exp_log_sqrt", ps, [&](G& g) {
          V x = g.param(ps[0]);
          V y = ag::add(ag::exp_op(x), ag::log_op(x));
          return weighted(g, ag::add(y, ag::sqrt_op(x)), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3, 3}, rng, -2, 2));
        simple("sum_mean", ps, [&](G& g) {
          return ag::add(ag::sum_all(g.param(ps[0])),
                         ag::mean_all(g.param(ps[0])));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {5}, rng, -2, 2));
        ps.push_back(make_param("b", {5}, rng, -2, 2));
        simple("dot_logaddexp", ps, [&](G& g) {
          V d = ag::dot(g.param(ps[0]), g.param(ps[1]));
          V l = ag::logaddexp(g.param(ps[0]), g.param(ps[1]));
          return ag::add(d, weighted(g, l, seed));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3}, rng, -2, 2));
        ps.push_back(make_param("b", {4}, rng, -2, 2));
        simple("concat_vec", ps, [&](G& g) {
          return weighted(g, ag::concat_vec(g.param(ps[0]), g.param(ps[1])),
                          seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {8}, rng, -2, 2));
        simple("slice_shift_vec", ps, [&](G& g) {
          V s = ag::slice_vec(g.param(ps[0]), 2, 6);
          V sh = ag::shift_vec(ag::shift_vec(g.param(ps[0]), 2, 0.0), -1, 0.5);
          return ag::add(weighted(g, s, seed), weighted(g, sh, seed ^ 2));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3, 2}, rng, -2, 2));
        ps.push_back(make_param("b", {3, 4}, rng, -2, 2));
        ps.push_back(make_param("c", {2, 2}, rng, -2, 2));
        simple("concat_cols_rows", ps, [&](G& g) {
          V cc = ag::concat_cols(g.param(ps[0]), g.param(ps[1]));
          V cr = ag::concat_rows(g.param(ps[0]), g.param(ps[2]));
          return ag::add(weighted(g, cc, seed), weighted(g, cr, seed ^ 3));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {5, 3}, rng, -2, 2));
        simple("slice_rows_row_of", ps, [&](G& g) {
          V r = ag::slice_rows(g.param(ps[0]), 1, 4);
          V one = ag::row_of(g.param(ps[0]), 2);
          return ag::add(weighted(g, r, seed), weighted(g, one, seed ^ 4));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {4, 6}, rng, -2, 2));
        simple("slice_cols_reshape", ps, [&](G& g) {
          V c = ag::slice_cols(g.param(ps[0]), 2, 5);
          V r = ag::reshape(g.param(ps[0]), {3, 8});
          return ag::add(weighted(g, c, seed), weighted(g, r, seed ^ 5));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("m", {3, 4}, rng, -2, 2));
        ps.push_back(make_param("v", {4}, rng, -2, 2));
        simple("rowvec_broadcast", ps, [&](G& g) {
          V a = ag::add_rowvec(g.param(ps[0]), g.param(ps[1]));
          V m = ag::mul_rowvec(g.param(ps[0]), g.param(ps[1]));
          return ag::add(weighted(g, a, seed), weighted(g, m, seed ^ 6));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {2, 3}, rng, -2, 2));
        A c({2, 3});
        for (double& x : c.v) x = rng.uniform_real(-1, 1);
        simple("add_const_mul_scalar", ps, [&](G& g) {
          V y = ag::add_const(g.param(ps[0]), c);
          V b = ag::mul_scalar(g.param(ps[0]), ag::sum_all(y));
          return weighted(g, b, seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {5}, rng, -4, 4));
        ps.push_back(make_param("b", {3, 4}, rng, -4, 4));
        simple("softmax_log_softmax", ps, [&](G& g) {
          V y = ag::add(weighted(g, ag::softmax(g.param(ps[0])), seed),
                        weighted(g, ag::softmax(g.param(ps[1])), seed ^ 7));
          V l =
              ag::add(weighted(g, ag::log_softmax(g.param(ps[0])), seed ^ 8),
                      weighted(g, ag::log_softmax(g.param(ps[1])), seed ^ 9));
          return ag::add(y, l);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("a", {3, 5}, rng, -2, 2));
        simple("layer_norm_rows", ps, [&](G& g) {
          return weighted(g, ag::layer_norm_rows(g.param(ps[0])), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("table", {5, 3}, rng, -2, 2));
        simple("gather_rows_elems", ps, [&](G& g) {
          V r = ag::gather_rows(g.param(ps[0]), {0, 2, 2, 4});
          V e = ag::gather_elems(g.param(ps[0]),
                                 {{0, 0}, {1, 2}, {3, 1}, {1, 2}});
          return ag::add(weighted(g, r, seed), weighted(g, e, seed ^ 10));
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("x", {7, 3}, rng, -2, 2));
        simple("unfold_time", ps, [&](G& g) {
          return weighted(g, ag::unfold_time(g.param(ps[0]), 3, 2), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("x", {5, 4}, rng, -2, 2));
        ps.push_back(make_param("w", {3, 4}, rng, -1, 1));
        simple("depthwise_conv_time", ps, [&](G& g) {
          return weighted(
              g, ag::depthwise_conv_time(g.param(ps[0]), g.param(ps[1])),
              seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param("wraw", {4}, rng, -2, 2));
        ps.push_back(make_param("sraw", {3}, rng, -2, 2));
        simple("circular_conv", ps, [&](G& g) {
          V w = ag::softmax(g.param(ps[0]));
          V s = ag::softmax(g.param(ps[1]));
          return weighted(g, ag::circular_conv(w, s, {-1, 0, 1}), seed);
        });
      }
      {
        std::vector<P> ps;
        ps.push_back(make_param_signed("m", {5, 4}, rng, 0.5, 2.0));
        ps.push_back(make_param_signed("k", {4}, rng, 0.5, 2.0));
        simple("cosine_rows_similarity", ps, [&](G& g) {
          V rows = ag::cosine_rows(g.param(ps[0]), g.param(ps[1]), 1e-8);
          V one = ag::cosine_similarity(ag::row_of(g.param(ps[0]), 1),
                                        g.param(ps[1]), 1e-8);
          return ag::add(weighted(g, rows, seed), one);
        });
      }
    }
  }

  // Four-stage addressing (content, interpolate, shift, sharpen) for a read
  // head, and the erase/add memory update for a write head. The memory is
  // randomized with O(1) signed magnitudes: near-collinear rows would put
  // the cosine gradients below finite-difference resolution.
  void addressing() {
    for (int round = 0; round < opt_.rounds; ++round) {
      const uint64_t seed = opt_.seed + uint64_t(round) * 2003;
      Rng rng(seed, "battery/address");
      ntm::MemoryConfig cfg;
      cfg.rows = 5;
      cfg.cols = 4;
      const std::string tag = "#" + std::to_string(round);

      std::vector<P> ps;
      ps.push_back(make_param(
          "raw", {ntm::read_raw_size(cfg.cols, cfg.shift_count())}, rng, -1,
          1));
      ps.push_back(make_param_signed("mem", {cfg.rows, cfg.cols}, rng, 0.5,
                                     2.0));
      ps.push_back(make_param("wprev_raw", {cfg.rows}, rng, -1, 1));
      std::vector<P*> ptrs{&ps[0], &ps[1], &ps[2]};
      run_case("ntm.address", "read_head_pipeline" + tag, ptrs, [&](G& g) {
        auto em = ntm::split_emissions(g.param(ps[0]), cfg, false);
        V wprev = ag::softmax(g.param(ps[2]));
        auto aw = ntm::address(em, g.param(ps[1]), wprev, cfg);
        V r = ntm::read(g.param(ps[1]), aw.final);
        // Tap every stage so no branch of the pipeline goes unchecked.
        V stages = ag::add(weighted(g, aw.content, seed),
                           weighted(g, aw.gated, seed ^ 1));
        stages = ag::add(stages, weighted(g, aw.shifted, seed ^ 2));
        stages = ag::add(stages, weighted(g, aw.final, seed ^ 3));
        return ag::add(stages, weighted(g, r, seed ^ 4));
      });

      std::vector<P> ws;
      ws.push_back(make_param(
          "raw", {ntm::write_raw_size(cfg.cols, cfg.shift_count())}, rng, -1,
          1));
      ws.push_back(make_param_signed("mem", {cfg.rows, cfg.cols}, rng, 0.5,
                                     2.0));
      ws.push_back(make_param("wprev_raw", {cfg.rows}, rng, -1, 1));
      std::vector<P*> wptrs{&ws[0], &ws[1], &ws[2]};
      run_case("ntm.address", "write_head_update" + tag, wptrs, [&](G& g) {
        auto em = ntm::split_emissions(g.param(ws[0]), cfg, true);
        V wprev = ag::softmax(g.param(ws[2]));
        auto aw = ntm::address(em, g.param(ws[1]), wprev, cfg);
        V updated = ntm::write(g.param(ws[1]), aw.final, em.erase, em.add);
        return weighted(g, updated, seed ^ 5);
      });
    }
  }

  // Multi-step rollout through the full bridge (heads, memory update, output
  // projection), from a randomized learned-init start state.
  void bridge() {
    for (int round = 0; round < opt_.rounds; ++round) {
      const uint64_t seed = opt_.seed + uint64_t(round) * 3001;
      Rng rng(seed, "battery/bridge");
      ntm::BridgeConfig cfg;
      cfg.d_model = 6;
      cfg.mem.rows = 5;
      cfg.mem.cols = 3;
      cfg.mem.init_scheme = ntm::InitScheme::kLearned;
      ntm::BridgeParams<double> params(cfg, seed ^ 0x9e37, "bridge");
      for (double& x : params.mem0.value.v) x = rng.uniform_real(-1, 1);
      for (auto& w : params.w0)
        for (double& x : w.value.v) x = rng.uniform_real(-1, 1);

      A xa({3, cfg.d_model});
      for (double& x : xa.v) x = rng.uniform_real(-1, 1);
      P x("x", std::move(xa));
      std::vector<P*> ptrs{&x};
      params.collect(ptrs);
      run_case("ntm.bridge", "rollout_3_steps#" + std::to_string(round), ptrs,
               [&](G& g) {
                 V seq = ntm::bridge_sequence(g, params, g.param(x));
                 return weighted(g, seq, seed ^ 6);
               });
    }
  }

  // Alignment-free loss on raw frame logits, plus its interpolation with the
  // cross-entropy branch.
  void ctc() {
    for (int round = 0; round < opt_.rounds; ++round) {
      const uint64_t seed = opt_.seed + uint64_t(round) * 4001;
      Rng rng(seed, "battery/ctc");
      const std::string tag = "#" + std::to_string(round);
      const int64_t blank = 3;

      std::vector<P> ps;
      ps.push_back(make_param("frame_logits", {6, 5}, rng, -2, 2));
      std::vector<P*> ptrs{&ps[0]};
      const std::vector<int64_t> y = {0, 4, 4};
      run_case("objective.ctc", "ctc_loss_T6" + tag, ptrs, [&](G& g) {
        return nn::ctc_loss(g, g.param(ps[0]), y, blank);
      });

      std::vector<P> js;
      js.push_back(make_param("frame_logits", {6, 5}, rng, -2, 2));
      js.push_back(make_param("att_logits", {3, 5}, rng, -2, 2));
      std::vector<P*> jptrs{&js[0], &js[1]};
      const std::vector<int64_t> y_out = {4, 4, 2};
      run_case("objective.ctc", "joint_with_attention" + tag, jptrs,
               [&](G& g) {
                 V att = nn::attention_loss(g, g.param(js[1]), y_out, 0.1);
                 V c = nn::ctc_loss(g, g.param(js[0]), y, blank);
                 return nn::joint_loss(att, c, 0.3);
               });
    }
  }

  // Assembled toy model (8 frames, width 8, memory 8x4, vocabulary 5) under
  // the joint objective, every parameter plus the input checked. Uses the
  // learned-init scheme with a randomized start state and a wider step: the
  // constant start is too flat for finite differences, and the composition
  // is deep enough that cancellation noise matters at 1e-5.
  void model_e2e() {
    nn::ModelConfig cfg;
    cfg.encoder.input_dim = 5;
    cfg.encoder.d_model = 8;
    cfg.encoder.n_blocks = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.ff_dim = 16;
    cfg.encoder.conv_kernel = 3;
    cfg.encoder.subsample = false;
    cfg.decoder.vocab_size = 5;
    cfg.decoder.d_model = 8;
    cfg.decoder.n_blocks = 1;
    cfg.decoder.n_heads = 2;
    cfg.decoder.ff_dim = 16;
    cfg.bridge.d_model = 8;
    cfg.bridge.mem.rows = 8;
    cfg.bridge.mem.cols = 4;
    cfg.bridge.mem.init_scheme = ntm::InitScheme::kLearned;

    nn::Model<double> model(cfg, opt_.seed ^ 0x51ed);
    Rng rng(opt_.seed, "battery/model");
    for (double& v : model.bridge->mem0.value.v) v = rng.uniform_real(-1, 1);
    for (auto& w : model.bridge->w0)
      for (double& v : w.value.v) v = rng.uniform_real(-1, 1);

    A xa({8, 5});
    for (double& v : xa.v) v = rng.uniform_real(-1, 1);
    P x("x", std::move(xa));
    std::vector<P*> ptrs{&x};
    model.collect(ptrs);
    const std::vector<int64_t> y = {4, 4};
    const std::vector<int64_t> y_out = {4, 4, cfg.decoder.eos};

    run_case(
        "model.e2e", "joint_loss_T8_d8_N8_W4_V5", ptrs,
        [&](G& g) {
          V o = model.encode_sequence(g, g.param(x));
          V att = nn::attention_loss(
              g, nn::decode_train(g, model.decoder, o, y), y_out, 0.1);
          V c = nn::ctc_loss(g, model.ctc_logits(g, o), y, cfg.decoder.blank);
          return nn::joint_loss(att, c, 0.3);
        },
        1e-4);
  }

 private:
  BatteryOptions opt_;
  BatteryReport report_;
};

}  // namespace

bool BatteryReport::all_passed() const {
  for (const CaseResult& c : cases)
    if (!c.passed) return false;
  return !cases.empty();
}

int64_t BatteryReport::failures() const {
  int64_t n = 0;
  for (const CaseResult& c : cases) n += c.passed ? 0 : 1;
  return n;
}

std::string BatteryReport::table() const {
  std::string out =
      "suite                 case                             checked  "
      "max_rel_err  status\n";
  char line[192];
  for (const CaseResult& c : cases) {
    std::snprintf(line, sizeof(line), "%-21s %-32s %7lld  %11.3e  %s\n",
                  c.suite.c_str(), c.name.c_str(),
                  static_cast<long long>(c.report.checked),
                  c.report.max_rel_err, c.passed ? "ok" : "FAIL");
    out += line;
    if (!c.passed) {
      out += "  ";
      out += c.report.summary();
      out += '\n';
    }
  }
  std::snprintf(line, sizeof(line), "battery: %zu cases, %lld failed\n",
                cases.size(), static_cast<long long>(failures()));
  out += line;
  return out;
}

const std::vector<std::string>& battery_suites() {
  static const std::vector<std::string> names = {
      "numerics.primitives", "ntm.address", "ntm.bridge", "objective.ctc",
      "model.e2e"};
  return names;
}

BatteryReport run_battery(const BatteryOptions& opt) {
  if (!opt.only.empty()) {
    bool known = false;
    for (const std::string& s : battery_suites()) known = known || s == opt.only;
    CNTM_CHECK(known, ErrorKind::kUsage,
               "unknown gradcheck suite: " + opt.only);
  }
  CNTM_CHECK(opt.rounds >= 1, ErrorKind::kConfig,
             "gradcheck rounds must be >= 1");
  Battery b(opt);
  const auto want = [&](const char* name) {
    return opt.only.empty() || opt.only == name;
  };
  if (want("numerics.primitives")) b.primitives();
  if (want("ntm.address")) b.addressing();
  if (want("ntm.bridge")) b.bridge();
  if (want("objective.ctc")) b.ctc();
  if (want("model.e2e")) b.model_e2e();
  return b.take();
}

}  // namespace cntm::check
