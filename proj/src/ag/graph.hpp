/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ag/array.hpp"
#include "common/error.hpp"

namespace cntm::ag {

template <class Real>
class Graph;

// Trainable tensor. Gradients accumulate across backward passes until
// zero_grad().
template <class Real>
struct Parameter {
  std::string name;
  Array<Real> value;
  Array<Real> grad;

  Parameter() = default;
  Parameter(std::string n, Array<Real> init)
      : name(std::move(n)), value(std::move(init)),
        grad(Array<Real>::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), Real(0)); }
  int64_t numel() const { return value.numel(); }
};

// Handle into a Graph's tape.
template <class Real>
struct Var {
  Graph<Real>* g = nullptr;
  int32_t id = -1;

  bool valid() const { return g != nullptr && id >= 0; }
  const Array<Real>& value() const;
  int64_t numel() const { return value().numel(); }
  const std::vector<int64_t>& shape() const { return value().shape; }
};

// Define-by-run tape. Nodes are appended in execution order; backward() walks
// the tape in reverse, so one graph evaluated twice produces bit-identical
// gradients. A graph constructed with record=false stores values only
// (inference mode).
template <class Real>
class Graph {
 public:
  // (graph, grad of this node's output, this node's output value)
  using BackFn = std::function<void(Graph&, const Array<Real>&, const Array<Real>&)>;

  explicit Graph(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }

  Var<Real> input(Array<Real> value) {
    return push(std::move(value), false, nullptr, {});
  }

  Var<Real> scalar(Real value) { return input(Array<Real>::scalar(value)); }

  Var<Real> param(Parameter<Real>& p) {
    Var<Real> v = push(p.value, record_, nullptr, {});
    nodes_[size_t(v.id)].bound = &p;
    return v;
  }

  // parents: tape ids this op reads; back: receives the node's output grad
  // and is responsible for routing into parent grad buffers.
  Var<Real> make(Array<Real> value, std::vector<int32_t> parents, BackFn back) {
    bool needs = false;
    if (record_) {
      for (int32_t pid : parents)
        if (nodes_[size_t(pid)].needs_grad) needs = true;
    }
    return push(std::move(value), needs, needs ? std::move(back) : nullptr,
                std::move(parents));
  }

  const Array<Real>& val(int32_t id) const { return nodes_[size_t(id)].value; }
  bool needs_grad(int32_t id) const { return nodes_[size_t(id)].needs_grad; }

  // Null when the node does not participate in differentiation.
  Array<Real>* grad_ptr(int32_t id) {
    Node& n = nodes_[size_t(id)];
    if (!n.needs_grad) return nullptr;
    if (!n.grad_live) {
      n.grad.shape = n.value.shape;
      n.grad.v.assign(n.value.v.size(), Real(0));
      n.grad_live = true;
    }
    return &n.grad;
  }

  // Reverse sweep from a scalar loss. Accumulates into bound Parameter grads.
  void backward(Var<Real> loss) {
    CNTM_CHECK(record_, ErrorKind::kDomain,
               "backward on a non-recording graph");
    CNTM_CHECK(loss.g == this, ErrorKind::kDomain, "loss from another graph");
    const Array<Real>& lv = val(loss.id);
    CNTM_CHECK(lv.is_scalar(), ErrorKind::kDomain,
               "backward requires a scalar loss, got shape " + lv.shape_str());
    for (Node& n : nodes_) n.grad_live = false;
    if (Array<Real>* g0 = grad_ptr(loss.id)) g0->v[0] = Real(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.needs_grad || !n.grad_live) continue;
      if (n.bound) {
        for (size_t k = 0; k < n.grad.v.size(); ++k)
          n.bound->grad.v[k] += n.grad.v[k];
      }
      if (n.back) n.back(*this, n.grad, n.value);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array<Real> value;
    Array<Real> grad;
    std::vector<int32_t> parents;
    BackFn back;
    Parameter<Real>* bound = nullptr;
    bool needs_grad = false;
    bool grad_live = false;
  };

  Var<Real> push(Array<Real> value, bool needs, BackFn back,
                 std::vector<int32_t> parents) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    n.back = std::move(back);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return Var<Real>{this, int32_t(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool record_;
};

template <class Real>
const Array<Real>& Var<Real>::value() const {
  return g->val(id);
}

}  // namespace cntm::ag
