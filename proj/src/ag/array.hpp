/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace cntm::ag {

// Dense row-major array. Rank 1 and 2 cover everything in this project.
template <class Real>
struct Array {
  std::vector<int64_t> shape;
  std::vector<Real> v;

  Array() = default;
  Array(std::vector<int64_t> s, Real fill = Real(0)) : shape(std::move(s)) {
    v.assign(size_t(numel_of(shape)), fill);
  }

  static Array vec(std::initializer_list<Real> vals) {
    Array a;
    a.shape = {int64_t(vals.size())};
    a.v = vals;
    return a;
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      CNTM_CHECK(e >= 0, ErrorKind::kShape, "negative extent");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return int64_t(v.size()); }
  int rank() const { return int(shape.size()); }
  int64_t rows() const { return rank() == 2 ? shape[0] : 1; }
  int64_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }
  bool is_scalar() const { return numel() == 1; }

  Real& at(int64_t i) { return v[size_t(i)]; }
  Real at(int64_t i) const { return v[size_t(i)]; }
  Real& at(int64_t r, int64_t c) { return v[size_t(r * shape[1] + c)]; }
  Real at(int64_t r, int64_t c) const { return v[size_t(r * shape[1] + c)]; }

  static Array zeros(std::vector<int64_t> s) { return Array(std::move(s)); }
  static Array full(std::vector<int64_t> s, Real value) {
    return Array(std::move(s), value);
  }
  static Array scalar(Real value) {
    Array a({1});
    a.v[0] = value;
    return a;
  }
  static Array from(std::vector<int64_t> s, std::vector<Real> data) {
    CNTM_CHECK(numel_of(s) == int64_t(data.size()), ErrorKind::kShape,
               "data length does not match shape");
    Array a;
    a.shape = std::move(s);
    a.v = std::move(data);
    return a;
  }

  template <class Other>
  Array<Other> cast() const {
    Array<Other> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = Other(v[i]);
    return out;
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

}  // namespace cntm::ag
