/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ag/graph.hpp"

namespace cntm::ag {

namespace detail {

template <class Real>
void check_same_shape(const Array<Real>& a, const Array<Real>& b,
                      const char* op) {
  CNTM_CHECK(a.shape == b.shape, ErrorKind::kShape,
             std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                 b.shape_str());
}

// Elementwise unary op: fwd(x) and dfdx(x, y) given output y.
template <class Real, class F, class DF>
Var<Real> unary(Var<Real> x, F fwd, DF dfdx) {
  const Array<Real>& xv = x.value();
  Array<Real> out;
  out.shape = xv.shape;
  out.v.resize(xv.v.size());
  for (size_t i = 0; i < xv.v.size(); ++i) out.v[i] = fwd(xv.v[i]);
  int32_t xid = x.id;
  return x.g->make(
      std::move(out), {xid},
      [xid, dfdx](Graph<Real>& g, const Array<Real>& gy, const Array<Real>& y) {
        if (Array<Real>* gx = g.grad_ptr(xid)) {
          const Array<Real>& xv = g.val(xid);
          for (size_t i = 0; i < gy.v.size(); ++i)
            gx->v[i] += gy.v[i] * dfdx(xv.v[i], y.v[i]);
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::check_same_shape(a.value(), b.value(), "add");
  Array<Real> out = a.value();
  const Array<Real>& bv = b.value();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  int32_t ai = a.id, bi = b.id;
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         gb->v[i] += gy.v[i];
                   });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  detail::check_same_shape(a.value(), b.value(), "sub");
  Array<Real> out = a.value();
  const Array<Real>& bv = b.value();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  int32_t ai = a.id, bi = b.id;
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         gb->v[i] -= gy.v[i];
                   });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  detail::check_same_shape(a.value(), b.value(), "mul");
  Array<Real> out = a.value();
  const Array<Real>& bv = b.value();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  int32_t ai = a.id, bi = b.id;
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     const Array<Real>& av = g.val(ai);
                     const Array<Real>& bv = g.val(bi);
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i] * bv.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         gb->v[i] += gy.v[i] * av.v[i];
                   });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  return detail::unary(
      a, [c](Real x) { return x * c; }, [c](Real, Real) { return c; });
}

template <class Real>
Var<Real> add_scalar(Var<Real> a, Real c) {
  return detail::unary(
      a, [c](Real x) { return x + c; }, [](Real, Real) { return Real(1); });
}

// a * s with scalar tape node s
template <class Real>
Var<Real> mul_scalar(Var<Real> a, Var<Real> s) {
  CNTM_CHECK(s.value().is_scalar(), ErrorKind::kShape,
             "mul_scalar: multiplier must be scalar");
  Real sv = s.value().v[0];
  Array<Real> out = a.value();
  for (Real& x : out.v) x *= sv;
  int32_t ai = a.id, si = s.id;
  return a.g->make(std::move(out), {ai, si},
                   [ai, si](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     Real sv = g.val(si).v[0];
                     const Array<Real>& av = g.val(ai);
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i] * sv;
                     if (auto* gs = g.grad_ptr(si)) {
                       Real acc = 0;
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         acc += gy.v[i] * av.v[i];
                       gs->v[0] += acc;
                     }
                   });
}

// a / s with scalar s
template <class Real>
Var<Real> div_scalar(Var<Real> a, Var<Real> s) {
  CNTM_CHECK(s.value().is_scalar(), ErrorKind::kShape,
             "div_scalar: divisor must be scalar");
  Real sv = s.value().v[0];
  Array<Real> out = a.value();
  for (Real& x : out.v) x /= sv;
  int32_t ai = a.id, si = s.id;
  return a.g->make(std::move(out), {ai, si},
                   [ai, si](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>& y) {
                     Real sv = g.val(si).v[0];
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i] / sv;
                     if (auto* gs = g.grad_ptr(si)) {
                       Real acc = 0;
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         acc += gy.v[i] * y.v[i];
                       gs->v[0] -= acc / sv;
                     }
                   });
}

// elementwise x^p with constant exponent; x >= 0 when p is fractional
template <class Real>
Var<Real> pow_const(Var<Real> a, Real p) {
  return detail::unary(
      a, [p](Real x) { return std::pow(x, p); },
      [p](Real x, Real) {
        if (x == Real(0)) return p > Real(1) ? Real(0) : (p == Real(1) ? Real(1) : Real(0));
        return p * std::pow(x, p - Real(1));
      });
}

// elementwise x^p with scalar tape exponent; requires x > 0
template <class Real>
Var<Real> pow_var(Var<Real> a, Var<Real> p) {
  CNTM_CHECK(p.value().is_scalar(), ErrorKind::kShape,
             "pow_var: exponent must be scalar");
  Real pv = p.value().v[0];
  Array<Real> out = a.value();
  for (Real& x : out.v) x = std::pow(x, pv);
  int32_t ai = a.id, pi = p.id;
  return a.g->make(
      std::move(out), {ai, pi},
      [ai, pi](Graph<Real>& g, const Array<Real>& gy, const Array<Real>& y) {
        const Array<Real>& av = g.val(ai);
        Real pv = g.val(pi).v[0];
        if (auto* ga = g.grad_ptr(ai))
          for (size_t i = 0; i < gy.v.size(); ++i)
            ga->v[i] += gy.v[i] * pv * std::pow(av.v[i], pv - Real(1));
        if (auto* gp = g.grad_ptr(pi)) {
          Real acc = 0;
          for (size_t i = 0; i < gy.v.size(); ++i)
            acc += gy.v[i] * y.v[i] * std::log(av.v[i]);
          gp->v[0] += acc;
        }
      });
}

template <class Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) { return add(a, b); }
template <class Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) { return sub(a, b); }
template <class Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// activations

template <class Real>
Var<Real> sigmoid(Var<Real> x) {
  return detail::unary(
      x,
      [](Real v) {
        return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                      : std::exp(v) / (Real(1) + std::exp(v));
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Var<Real> tanh_op(Var<Real> x) {
  return detail::unary(
      x, [](Real v) { return std::tanh(v); },
      [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  return detail::unary(
      x, [](Real v) { return v > 0 ? v : Real(0); },
      [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

template <class Real>
Var<Real> softplus(Var<Real> x) {
  return detail::unary(
      x,
      [](Real v) {
        if (v > Real(30)) return v;
        if (v < Real(-30)) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](Real v, Real) {
        return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                      : std::exp(v) / (Real(1) + std::exp(v));
      });
}

template <class Real>
Var<Real> exp_op(Var<Real> x) {
  return detail::unary(
      x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <class Real>
Var<Real> log_op(Var<Real> x) {
  return detail::unary(
      x, [](Real v) { return std::log(v); },
      [](Real v, Real) { return Real(1) / v; });
}

template <class Real>
Var<Real> sqrt_op(Var<Real> x) {
  return detail::unary(
      x, [](Real v) { return std::sqrt(v); },
      [](Real, Real y) { return Real(1) / (Real(2) * y); });
}

// x * sigmoid(x)
template <class Real>
Var<Real> swish(Var<Real> x) {
  return mul(x, sigmoid(x));
}

// ---------------------------------------------------------------------------
// reductions

template <class Real>
Var<Real> sum_all(Var<Real> a) {
  Real acc = 0;
  for (Real x : a.value().v) acc += x;
  int32_t ai = a.id;
  return a.g->make(Array<Real>::scalar(acc), {ai},
                   [ai](Graph<Real>& g, const Array<Real>& gy,
                        const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (Real& x : ga->v) x += gy.v[0];
                   });
}

template <class Real>
Var<Real> mean_all(Var<Real> a) {
  int64_t n = a.value().numel();
  CNTM_CHECK(n > 0, ErrorKind::kDomain, "mean of empty tensor");
  return scale(sum_all(a), Real(1) / Real(n));
}

template <class Real>
Var<Real> dot(Var<Real> a, Var<Real> b) {
  detail::check_same_shape(a.value(), b.value(), "dot");
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  Real acc = 0;
  for (size_t i = 0; i < av.v.size(); ++i) acc += av.v[i] * bv.v[i];
  int32_t ai = a.id, bi = b.id;
  return a.g->make(Array<Real>::scalar(acc), {ai, bi},
                   [ai, bi](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     Real s = gy.v[0];
                     const Array<Real>& av = g.val(ai);
                     const Array<Real>& bv = g.val(bi);
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < av.v.size(); ++i)
                         ga->v[i] += s * bv.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = 0; i < av.v.size(); ++i)
                         gb->v[i] += s * av.v[i];
                   });
}

// ---------------------------------------------------------------------------
// linear algebra

// Rank-1 operands are promoted: a as 1xk, b as kx1; the promoted axis is
// dropped from the output.
template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  CNTM_CHECK(av.rank() >= 1 && av.rank() <= 2 && bv.rank() >= 1 && bv.rank() <= 2,
             ErrorKind::kShape, "matmul: operands must be rank 1 or 2");
  bool a_vec = av.rank() == 1, b_vec = bv.rank() == 1;
  int64_t m = a_vec ? 1 : av.shape[0];
  int64_t k = a_vec ? av.shape[0] : av.shape[1];
  int64_t k2 = b_vec ? bv.shape[0] : bv.shape[0];
  int64_t n = b_vec ? 1 : bv.shape[1];
  CNTM_CHECK(k == k2, ErrorKind::kShape,
             "matmul: inner dims " + av.shape_str() + " x " + bv.shape_str());
  Array<Real> out;
  if (a_vec && b_vec) out.shape = {1};
  else if (a_vec) out.shape = {n};
  else if (b_vec) out.shape = {m};
  else out.shape = {m, n};
  out.v.assign(size_t(m * n), Real(0));
  const Real* A = av.v.data();
  const Real* B = bv.v.data();
  Real* C = out.v.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      Real s = A[i * k + p];
      const Real* Bp = B + p * n;
      Real* Ci = C + i * n;
      for (int64_t j = 0; j < n; ++j) Ci[j] += s * Bp[j];
    }
  int32_t ai = a.id, bi = b.id;
  return a.g->make(
      std::move(out), {ai, bi},
      [ai, bi, m, k, n](Graph<Real>& g, const Array<Real>& gy,
                        const Array<Real>&) {
        const Real* A = g.val(ai).v.data();
        const Real* B = g.val(bi).v.data();
        const Real* GY = gy.v.data();
        if (auto* ga = g.grad_ptr(ai)) {
          Real* GA = ga->v.data();
          // dA[i,p] += sum_j gy[i,j] * B[p,j]
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              Real acc = 0;
              const Real* Bp = B + p * n;
              const Real* Gi = GY + i * n;
              for (int64_t j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
              GA[i * k + p] += acc;
            }
        }
        if (auto* gb = g.grad_ptr(bi)) {
          Real* GB = gb->v.data();
          // dB[p,j] += sum_i A[i,p] * gy[i,j]
          for (int64_t i = 0; i < m; ++i) {
            const Real* Gi = GY + i * n;
            for (int64_t p = 0; p < k; ++p) {
              Real s = A[i * k + p];
              Real* GBp = GB + p * n;
              for (int64_t j = 0; j < n; ++j) GBp[j] += s * Gi[j];
            }
          }
        }
      });
}

template <class Real>
Var<Real> transpose(Var<Real> a) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 2, ErrorKind::kShape, "transpose: rank-2 only");
  int64_t r = av.shape[0], c = av.shape[1];
  Array<Real> out({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, r, c](Graph<Real>& g, const Array<Real>& gy,
                              const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (int64_t i = 0; i < r; ++i)
                         for (int64_t j = 0; j < c; ++j)
                           ga->v[size_t(i * c + j)] += gy.v[size_t(j * r + i)];
                   });
}

// ---------------------------------------------------------------------------
// shape ops

template <class Real>
Var<Real> reshape(Var<Real> a, std::vector<int64_t> shape) {
  CNTM_CHECK(Array<Real>::numel_of(shape) == a.value().numel(),
             ErrorKind::kShape, "reshape: numel mismatch");
  Array<Real> out;
  out.shape = std::move(shape);
  out.v = a.value().v;
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai](Graph<Real>& g, const Array<Real>& gy,
                        const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i];
                   });
}

template <class Real>
Var<Real> concat_vec(Var<Real> a, Var<Real> b) {
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  CNTM_CHECK(av.rank() == 1 && bv.rank() == 1, ErrorKind::kShape,
             "concat_vec: rank-1 only");
  Array<Real> out({av.shape[0] + bv.shape[0]});
  std::copy(av.v.begin(), av.v.end(), out.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + av.v.size());
  int32_t ai = a.id, bi = b.id;
  size_t na = av.v.size();
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi, na](Graph<Real>& g, const Array<Real>& gy,
                                const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < na; ++i) ga->v[i] += gy.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = na; i < gy.v.size(); ++i)
                         gb->v[i - na] += gy.v[i];
                   });
}

template <class Real>
Var<Real> slice_vec(Var<Real> a, int64_t lo, int64_t hi) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 1, ErrorKind::kShape, "slice_vec: rank-1 only");
  CNTM_CHECK(0 <= lo && lo <= hi && hi <= av.shape[0], ErrorKind::kShape,
             "slice_vec: bad range");
  Array<Real> out({hi - lo});
  std::copy(av.v.begin() + lo, av.v.begin() + hi, out.v.begin());
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, lo](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[size_t(lo) + i] += gy.v[i];
                   });
}

// y[i] = a[i - k] where defined, else fill
template <class Real>
Var<Real> shift_vec(Var<Real> a, int64_t k, Real fill) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 1, ErrorKind::kShape, "shift_vec: rank-1 only");
  int64_t n = av.shape[0];
  Array<Real> out({n}, fill);
  for (int64_t i = 0; i < n; ++i) {
    int64_t j = i - k;
    if (j >= 0 && j < n) out.at(i) = av.at(j);
  }
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, k, n](Graph<Real>& g, const Array<Real>& gy,
                              const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (int64_t i = 0; i < n; ++i) {
                         int64_t j = i - k;
                         if (j >= 0 && j < n) ga->v[size_t(j)] += gy.v[size_t(i)];
                       }
                   });
}

template <class Real>
Var<Real> concat_cols(Var<Real> a, Var<Real> b) {
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  CNTM_CHECK(av.rank() == 2 && bv.rank() == 2 && av.shape[0] == bv.shape[0],
             ErrorKind::kShape, "concat_cols: row mismatch");
  int64_t r = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
  Array<Real> out({r, ca + cb});
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
    for (int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
  }
  int32_t ai = a.id, bi = b.id;
  return a.g->make(
      std::move(out), {ai, bi},
      [ai, bi, r, ca, cb](Graph<Real>& g, const Array<Real>& gy,
                          const Array<Real>&) {
        if (auto* ga = g.grad_ptr(ai))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < ca; ++j)
              ga->v[size_t(i * ca + j)] += gy.v[size_t(i * (ca + cb) + j)];
        if (auto* gb = g.grad_ptr(bi))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < cb; ++j)
              gb->v[size_t(i * cb + j)] += gy.v[size_t(i * (ca + cb) + ca + j)];
      });
}

template <class Real>
Var<Real> concat_rows(Var<Real> a, Var<Real> b) {
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  CNTM_CHECK(av.rank() == 2 && bv.rank() == 2 && av.shape[1] == bv.shape[1],
             ErrorKind::kShape, "concat_rows: col mismatch");
  Array<Real> out({av.shape[0] + bv.shape[0], av.shape[1]});
  std::copy(av.v.begin(), av.v.end(), out.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + av.v.size());
  int32_t ai = a.id, bi = b.id;
  size_t na = av.v.size();
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi, na](Graph<Real>& g, const Array<Real>& gy,
                                const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < na; ++i) ga->v[i] += gy.v[i];
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = na; i < gy.v.size(); ++i)
                         gb->v[i - na] += gy.v[i];
                   });
}

template <class Real>
Var<Real> slice_rows(Var<Real> a, int64_t lo, int64_t hi) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 2, ErrorKind::kShape, "slice_rows: rank-2 only");
  CNTM_CHECK(0 <= lo && lo <= hi && hi <= av.shape[0], ErrorKind::kShape,
             "slice_rows: bad range");
  int64_t c = av.shape[1];
  Array<Real> out({hi - lo, c});
  std::copy(av.v.begin() + lo * c, av.v.begin() + hi * c, out.v.begin());
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, lo, c](Graph<Real>& g, const Array<Real>& gy,
                               const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[size_t(lo * c) + i] += gy.v[i];
                   });
}

template <class Real>
Var<Real> slice_cols(Var<Real> a, int64_t lo, int64_t hi) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 2, ErrorKind::kShape, "slice_cols: rank-2 only");
  CNTM_CHECK(0 <= lo && lo <= hi && hi <= av.shape[1], ErrorKind::kShape,
             "slice_cols: bad range");
  int64_t r = av.shape[0], c = av.shape[1], w = hi - lo;
  Array<Real> out({r, w});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, lo + j);
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, lo, r, c, w](Graph<Real>& g, const Array<Real>& gy,
                                     const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (int64_t i = 0; i < r; ++i)
                         for (int64_t j = 0; j < w; ++j)
                           ga->v[size_t(i * c + lo + j)] +=
                               gy.v[size_t(i * w + j)];
                   });
}

// row i as a rank-1 vector
template <class Real>
Var<Real> row_of(Var<Real> a, int64_t i) {
  const Array<Real>& av = a.value();
  return reshape(slice_rows(a, i, i + 1), {av.shape[1]});
}

// n same-length vectors into an n x len matrix in one node
template <class Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows) {
  CNTM_CHECK(!rows.empty(), ErrorKind::kShape, "stack_rows: no rows");
  int64_t len = rows[0].value().numel();
  std::vector<int32_t> parents;
  parents.reserve(rows.size());
  Array<Real> out({int64_t(rows.size()), len});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Array<Real>& rv = rows[i].value();
    CNTM_CHECK(rv.rank() == 1 && rv.shape[0] == len, ErrorKind::kShape,
               "stack_rows: row " + std::to_string(i) + " has shape " +
                   rv.shape_str());
    std::copy(rv.v.begin(), rv.v.end(), out.v.begin() + int64_t(i) * len);
    parents.push_back(rows[i].id);
  }
  Graph<Real>* g = rows[0].g;
  std::vector<int32_t> ids = parents;
  return g->make(std::move(out), std::move(parents),
                 [ids = std::move(ids), len](Graph<Real>& g,
                                             const Array<Real>& gy,
                                             const Array<Real>&) {
                   for (size_t i = 0; i < ids.size(); ++i)
                     if (auto* gr = g.grad_ptr(ids[i]))
                       for (int64_t j = 0; j < len; ++j)
                         gr->v[size_t(j)] += gy.v[size_t(int64_t(i) * len + j)];
                 });
}

// ---------------------------------------------------------------------------
// broadcasting helpers over rows of a matrix

template <class Real>
Var<Real> add_rowvec(Var<Real> m, Var<Real> v) {
  const Array<Real>& mv = m.value();
  const Array<Real>& vv = v.value();
  CNTM_CHECK(mv.rank() == 2 && vv.rank() == 1 && mv.shape[1] == vv.shape[0],
             ErrorKind::kShape, "add_rowvec: shape mismatch");
  int64_t r = mv.shape[0], c = mv.shape[1];
  Array<Real> out = mv;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) += vv.at(j);
  int32_t mi = m.id, vi = v.id;
  return m.g->make(std::move(out), {mi, vi},
                   [mi, vi, r, c](Graph<Real>& g, const Array<Real>& gy,
                                  const Array<Real>&) {
                     if (auto* gm = g.grad_ptr(mi))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         gm->v[i] += gy.v[i];
                     if (auto* gv = g.grad_ptr(vi))
                       for (int64_t i = 0; i < r; ++i)
                         for (int64_t j = 0; j < c; ++j)
                           gv->v[size_t(j)] += gy.v[size_t(i * c + j)];
                   });
}

template <class Real>
Var<Real> mul_rowvec(Var<Real> m, Var<Real> v) {
  const Array<Real>& mv = m.value();
  const Array<Real>& vv = v.value();
  CNTM_CHECK(mv.rank() == 2 && vv.rank() == 1 && mv.shape[1] == vv.shape[0],
             ErrorKind::kShape, "mul_rowvec: shape mismatch");
  int64_t r = mv.shape[0], c = mv.shape[1];
  Array<Real> out = mv;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) *= vv.at(j);
  int32_t mi = m.id, vi = v.id;
  return m.g->make(
      std::move(out), {mi, vi},
      [mi, vi, r, c](Graph<Real>& g, const Array<Real>& gy,
                     const Array<Real>&) {
        const Array<Real>& mv = g.val(mi);
        const Array<Real>& vv = g.val(vi);
        if (auto* gm = g.grad_ptr(mi))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
              gm->v[size_t(i * c + j)] += gy.v[size_t(i * c + j)] * vv.v[size_t(j)];
        if (auto* gv = g.grad_ptr(vi))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
              gv->v[size_t(j)] += gy.v[size_t(i * c + j)] * mv.v[size_t(i * c + j)];
      });
}

// add a constant array (e.g. positional encodings, attention masks)
template <class Real>
Var<Real> add_const(Var<Real> a, const Array<Real>& c) {
  detail::check_same_shape(a.value(), c, "add_const");
  Array<Real> out = a.value();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai](Graph<Real>& g, const Array<Real>& gy,
                        const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i];
                   });
}

// ---------------------------------------------------------------------------
// softmax family (max-subtracted), applied to the whole vector for rank 1 and
// per row for rank 2

template <class Real>
Var<Real> softmax(Var<Real> a) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.numel() >= 1, ErrorKind::kDomain, "softmax of empty vector");
  int64_t r = av.rank() == 2 ? av.shape[0] : 1;
  int64_t c = av.rank() == 2 ? av.shape[1] : av.shape[0];
  Array<Real> out = av;
  for (int64_t i = 0; i < r; ++i) {
    Real* row = out.v.data() + i * c;
    Real mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (int64_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int64_t j = 0; j < c; ++j) row[j] /= z;
  }
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, r, c](Graph<Real>& g, const Array<Real>& gy,
                              const Array<Real>& y) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (int64_t i = 0; i < r; ++i) {
                         const Real* yr = y.v.data() + i * c;
                         const Real* gr = gy.v.data() + i * c;
                         Real s = 0;
                         for (int64_t j = 0; j < c; ++j) s += gr[j] * yr[j];
                         Real* out = ga->v.data() + i * c;
                         for (int64_t j = 0; j < c; ++j)
                           out[j] += yr[j] * (gr[j] - s);
                       }
                   });
}

template <class Real>
Var<Real> log_softmax(Var<Real> a) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.numel() >= 1, ErrorKind::kDomain, "log_softmax of empty vector");
  int64_t r = av.rank() == 2 ? av.shape[0] : 1;
  int64_t c = av.rank() == 2 ? av.shape[1] : av.shape[0];
  Array<Real> out = av;
  for (int64_t i = 0; i < r; ++i) {
    Real* row = out.v.data() + i * c;
    Real mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    Real lz = mx + std::log(z);
    for (int64_t j = 0; j < c; ++j) row[j] -= lz;
  }
  int32_t ai = a.id;
  return a.g->make(std::move(out), {ai},
                   [ai, r, c](Graph<Real>& g, const Array<Real>& gy,
                              const Array<Real>& y) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (int64_t i = 0; i < r; ++i) {
                         const Real* yr = y.v.data() + i * c;
                         const Real* gr = gy.v.data() + i * c;
                         Real s = 0;
                         for (int64_t j = 0; j < c; ++j) s += gr[j];
                         Real* out = ga->v.data() + i * c;
                         for (int64_t j = 0; j < c; ++j)
                           out[j] += gr[j] - std::exp(yr[j]) * s;
                       }
                   });
}

// per-row (x - mean) / sqrt(var + eps); affine transforms live in the caller
template <class Real>
Var<Real> layer_norm_rows(Var<Real> a, Real eps = Real(1e-5)) {
  const Array<Real>& av = a.value();
  int64_t r = av.rank() == 2 ? av.shape[0] : 1;
  int64_t c = av.rank() == 2 ? av.shape[1] : av.shape[0];
  CNTM_CHECK(c >= 1, ErrorKind::kShape, "layer_norm of empty rows");
  Array<Real> out = av;
  for (int64_t i = 0; i < r; ++i) {
    Real* row = out.v.data() + i * c;
    Real mu = 0;
    for (int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= Real(c);
    Real var = 0;
    for (int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= Real(c);
    Real s = std::sqrt(var + eps);
    for (int64_t j = 0; j < c; ++j) row[j] = (row[j] - mu) / s;
  }
  int32_t ai = a.id;
  return a.g->make(
      std::move(out), {ai},
      [ai, r, c, eps](Graph<Real>& g, const Array<Real>& gy,
                      const Array<Real>& y) {
        if (auto* ga = g.grad_ptr(ai)) {
          const Array<Real>& av = g.val(ai);
          for (int64_t i = 0; i < r; ++i) {
            const Real* x = av.v.data() + i * c;
            const Real* xh = y.v.data() + i * c;
            const Real* gr = gy.v.data() + i * c;
            Real mu = 0;
            for (int64_t j = 0; j < c; ++j) mu += x[j];
            mu /= Real(c);
            Real var = 0;
            for (int64_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
            var /= Real(c);
            Real s = std::sqrt(var + eps);
            Real mg = 0, mgx = 0;
            for (int64_t j = 0; j < c; ++j) {
              mg += gr[j];
              mgx += gr[j] * xh[j];
            }
            mg /= Real(c);
            mgx /= Real(c);
            Real* out = ga->v.data() + i * c;
            for (int64_t j = 0; j < c; ++j)
              out[j] += (gr[j] - mg - xh[j] * mgx) / s;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// gathers

// rows of E selected by ids (embedding lookup); backward scatter-adds
template <class Real>
Var<Real> gather_rows(Var<Real> e, std::vector<int64_t> ids) {
  const Array<Real>& ev = e.value();
  CNTM_CHECK(ev.rank() == 2, ErrorKind::kShape, "gather_rows: rank-2 table");
  int64_t c = ev.shape[1];
  for (int64_t id : ids)
    CNTM_CHECK(0 <= id && id < ev.shape[0], ErrorKind::kDomain,
               "gather_rows: id out of range");
  Array<Real> out({int64_t(ids.size()), c});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(ev.v.begin() + ids[i] * c, ev.v.begin() + (ids[i] + 1) * c,
              out.v.begin() + int64_t(i) * c);
  int32_t ei = e.id;
  return e.g->make(std::move(out), {ei},
                   [ei, ids = std::move(ids), c](Graph<Real>& g,
                                                 const Array<Real>& gy,
                                                 const Array<Real>&) {
                     if (auto* ge = g.grad_ptr(ei))
                       for (size_t i = 0; i < ids.size(); ++i)
                         for (int64_t j = 0; j < c; ++j)
                           ge->v[size_t(ids[i] * c + j)] +=
                               gy.v[size_t(int64_t(i) * c + j)];
                   });
}

// arbitrary (row, col) picks flattened to a vector
template <class Real>
Var<Real> gather_elems(Var<Real> a, std::vector<std::pair<int64_t, int64_t>> rc) {
  const Array<Real>& av = a.value();
  CNTM_CHECK(av.rank() == 2, ErrorKind::kShape, "gather_elems: rank-2 only");
  Array<Real> out({int64_t(rc.size())});
  for (size_t i = 0; i < rc.size(); ++i) {
    CNTM_CHECK(rc[i].first >= 0 && rc[i].first < av.shape[0] &&
                   rc[i].second >= 0 && rc[i].second < av.shape[1],
               ErrorKind::kDomain, "gather_elems: index out of range");
    out.v[i] = av.at(rc[i].first, rc[i].second);
  }
  int32_t ai = a.id;
  int64_t c = av.shape[1];
  return a.g->make(std::move(out), {ai},
                   [ai, rc = std::move(rc), c](Graph<Real>& g,
                                               const Array<Real>& gy,
                                               const Array<Real>&) {
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < rc.size(); ++i)
                         ga->v[size_t(rc[i].first * c + rc[i].second)] +=
                             gy.v[i];
                   });
}

// ---------------------------------------------------------------------------
// convolution helpers over the time axis

// x: T x C -> T_out x (K*C) with T_out = (T - K) / stride + 1, no padding
template <class Real>
Var<Real> unfold_time(Var<Real> x, int64_t K, int64_t stride) {
  const Array<Real>& xv = x.value();
  CNTM_CHECK(xv.rank() == 2, ErrorKind::kShape, "unfold_time: rank-2 only");
  int64_t T = xv.shape[0], C = xv.shape[1];
  CNTM_CHECK(T >= K, ErrorKind::kDomain, "unfold_time: sequence shorter than kernel");
  int64_t To = (T - K) / stride + 1;
  Array<Real> out({To, K * C});
  for (int64_t t = 0; t < To; ++t)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t c = 0; c < C; ++c)
        out.at(t, k * C + c) = xv.at(t * stride + k, c);
  int32_t xi = x.id;
  return x.g->make(std::move(out), {xi},
                   [xi, K, stride, To, C](Graph<Real>& g, const Array<Real>& gy,
                                          const Array<Real>&) {
                     if (auto* gx = g.grad_ptr(xi))
                       for (int64_t t = 0; t < To; ++t)
                         for (int64_t k = 0; k < K; ++k)
                           for (int64_t c = 0; c < C; ++c)
                             gx->v[size_t((t * stride + k) * C + c)] +=
                                 gy.v[size_t(t * (K * C) + k * C + c)];
                   });
}

// depthwise temporal convolution with same padding; w: K x C, K odd
template <class Real>
Var<Real> depthwise_conv_time(Var<Real> x, Var<Real> w) {
  const Array<Real>& xv = x.value();
  const Array<Real>& wv = w.value();
  CNTM_CHECK(xv.rank() == 2 && wv.rank() == 2 && xv.shape[1] == wv.shape[1],
             ErrorKind::kShape, "depthwise_conv_time: shape mismatch");
  int64_t T = xv.shape[0], C = xv.shape[1], K = wv.shape[0];
  CNTM_CHECK(K % 2 == 1, ErrorKind::kConfig, "depthwise kernel must be odd");
  int64_t P = (K - 1) / 2;
  Array<Real> out({T, C});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t k = 0; k < K; ++k) {
      int64_t src = t + k - P;
      if (src < 0 || src >= T) continue;
      for (int64_t c = 0; c < C; ++c)
        out.at(t, c) += wv.at(k, c) * xv.at(src, c);
    }
  int32_t xi = x.id, wi = w.id;
  return x.g->make(
      std::move(out), {xi, wi},
      [xi, wi, T, C, K, P](Graph<Real>& g, const Array<Real>& gy,
                           const Array<Real>&) {
        const Array<Real>& xv = g.val(xi);
        const Array<Real>& wv = g.val(wi);
        auto* gx = g.grad_ptr(xi);
        auto* gw = g.grad_ptr(wi);
        for (int64_t t = 0; t < T; ++t)
          for (int64_t k = 0; k < K; ++k) {
            int64_t src = t + k - P;
            if (src < 0 || src >= T) continue;
            for (int64_t c = 0; c < C; ++c) {
              Real gyv = gy.v[size_t(t * C + c)];
              if (gx) gx->v[size_t(src * C + c)] += gyv * wv.at(k, c);
              if (gw) gw->v[size_t(k * C + c)] += gyv * xv.at(src, c);
            }
          }
      });
}

// ---------------------------------------------------------------------------
// addressing primitives

// y(i) = sum_d w((i - offsets[d]) mod N) * s(d); a circular shift blend
template <class Real>
Var<Real> circular_conv(Var<Real> w, Var<Real> s,
                        std::vector<int64_t> offsets) {
  const Array<Real>& wv = w.value();
  const Array<Real>& sv = s.value();
  CNTM_CHECK(wv.rank() == 1 && sv.rank() == 1, ErrorKind::kShape,
             "circular_conv: rank-1 only");
  CNTM_CHECK(sv.shape[0] == int64_t(offsets.size()), ErrorKind::kConfig,
             "circular_conv: shift vector does not cover the shift set");
  int64_t N = wv.shape[0];
  auto modn = [N](int64_t x) { return ((x % N) + N) % N; };
  Array<Real> out({N});
  for (int64_t i = 0; i < N; ++i) {
    Real acc = 0;
    for (size_t d = 0; d < offsets.size(); ++d)
      acc += wv.at(modn(i - offsets[d])) * sv.at(int64_t(d));
    out.at(i) = acc;
  }
  int32_t wi = w.id, si = s.id;
  return w.g->make(
      std::move(out), {wi, si},
      [wi, si, N, offsets = std::move(offsets), modn](
          Graph<Real>& g, const Array<Real>& gy, const Array<Real>&) {
        const Array<Real>& wv = g.val(wi);
        const Array<Real>& sv = g.val(si);
        if (auto* gw = g.grad_ptr(wi))
          for (int64_t j = 0; j < N; ++j)
            for (size_t d = 0; d < offsets.size(); ++d)
              gw->v[size_t(j)] +=
                  gy.v[size_t(modn(j + offsets[d]))] * sv.at(int64_t(d));
        if (auto* gs = g.grad_ptr(si))
          for (size_t d = 0; d < offsets.size(); ++d) {
            Real acc = 0;
            for (int64_t i = 0; i < N; ++i)
              acc += gy.v[size_t(i)] * wv.at(modn(i - offsets[d]));
            gs->v[d] += acc;
          }
      });
}

// c_i = (M_i . k) / (|M_i| |k| + delta), one similarity per memory row
template <class Real>
Var<Real> cosine_rows(Var<Real> m, Var<Real> k, Real delta) {
  const Array<Real>& mv = m.value();
  const Array<Real>& kv = k.value();
  CNTM_CHECK(mv.rank() == 2 && kv.rank() == 1 && mv.shape[1] == kv.shape[0],
             ErrorKind::kShape, "cosine_rows: key length must match row width");
  int64_t N = mv.shape[0], W = mv.shape[1];
  Real nk = 0;
  for (Real x : kv.v) nk += x * x;
  nk = std::sqrt(nk);
  Array<Real> out({N});
  for (int64_t i = 0; i < N; ++i) {
    Real d = 0, nm = 0;
    for (int64_t j = 0; j < W; ++j) {
      d += mv.at(i, j) * kv.at(j);
      nm += mv.at(i, j) * mv.at(i, j);
    }
    out.at(i) = d / (std::sqrt(nm) * nk + delta);
  }
  int32_t mi = m.id, ki = k.id;
  return m.g->make(
      std::move(out), {mi, ki},
      [mi, ki, N, W, delta](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>& y) {
        const Array<Real>& mv = g.val(mi);
        const Array<Real>& kv = g.val(ki);
        auto* gm = g.grad_ptr(mi);
        auto* gk = g.grad_ptr(ki);
        if (!gm && !gk) return;
        Real nk = 0;
        for (Real x : kv.v) nk += x * x;
        nk = std::sqrt(nk);
        for (int64_t i = 0; i < N; ++i) {
          Real d = 0, nm2 = 0;
          for (int64_t j = 0; j < W; ++j) {
            d += mv.at(i, j) * kv.at(j);
            nm2 += mv.at(i, j) * mv.at(i, j);
          }
          Real nm = std::sqrt(nm2);
          Real D = nm * nk + delta;
          Real gi = gy.v[size_t(i)];
          if (gi == Real(0)) continue;
          // dc/dk = M_i/D - c * nm * (k/|k|) / D
          if (gk) {
            Real coef = nk > 0 ? y.v[size_t(i)] * nm / (D * nk) : Real(0);
            for (int64_t j = 0; j < W; ++j)
              gk->v[size_t(j)] += gi * (mv.at(i, j) / D - coef * kv.at(j));
          }
          // dc/dM_i = k/D - c * nk * (M_i/|M_i|) / D
          if (gm) {
            Real coef = nm > 0 ? y.v[size_t(i)] * nk / (D * nm) : Real(0);
            for (int64_t j = 0; j < W; ++j)
              gm->v[size_t(i * W + j)] +=
                  gi * (kv.at(j) / D - coef * mv.at(i, j));
          }
        }
      });
}

// elementwise log(exp(a) + exp(b)), stable against large negatives
template <class Real>
Var<Real> logaddexp(Var<Real> a, Var<Real> b) {
  detail::check_same_shape(a.value(), b.value(), "logaddexp");
  const Array<Real>& av = a.value();
  const Array<Real>& bv = b.value();
  Array<Real> out;
  out.shape = av.shape;
  out.v.resize(av.v.size());
  for (size_t i = 0; i < av.v.size(); ++i) {
    Real m = std::max(av.v[i], bv.v[i]);
    out.v[i] = m + std::log(std::exp(av.v[i] - m) + std::exp(bv.v[i] - m));
  }
  int32_t ai = a.id, bi = b.id;
  return a.g->make(std::move(out), {ai, bi},
                   [ai, bi](Graph<Real>& g, const Array<Real>& gy,
                            const Array<Real>& y) {
                     const Array<Real>& av = g.val(ai);
                     const Array<Real>& bv = g.val(bi);
                     if (auto* ga = g.grad_ptr(ai))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         ga->v[i] += gy.v[i] * std::exp(av.v[i] - y.v[i]);
                     if (auto* gb = g.grad_ptr(bi))
                       for (size_t i = 0; i < gy.v.size(); ++i)
                         gb->v[i] += gy.v[i] * std::exp(bv.v[i] - y.v[i]);
                   });
}

// cosine similarity of two vectors with stabilized denominator
template <class Real>
Var<Real> cosine_similarity(Var<Real> u, Var<Real> v, Real delta = Real(1e-8)) {
  const Array<Real>& uv = u.value();
  const Array<Real>& vv = v.value();
  CNTM_CHECK(uv.rank() == 1 && vv.rank() == 1 && uv.shape == vv.shape,
             ErrorKind::kShape, "cosine_similarity: length mismatch");
  Var<Real> m = reshape(u, {1, uv.shape[0]});
  Var<Real> c = cosine_rows(m, v, delta);
  return reshape(c, {1});
}

}  // namespace cntm::ag
