#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coqac/tensor.hpp"

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph is a tape: every op appends a node holding its forward value and a
// closure that pushes the output gradient back to its parents. Graphs are
// single-threaded; build one per forward pass. Parameters live outside the
// graph and receive gradients through Graph::parameter leaves.
namespace coqac::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value once touched by backward
};

class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_grad();
  double grad_norm() const;
  // Rescales gradients so their global L2 norm is at most max_norm. Returns
  // the norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  std::deque<Parameter> params_;  // deque keeps element addresses stable
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Graph;

class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  // Non-owning constant; the tensor must outlive the graph.
  Var constant_ref(const Tensor& t);
  // Leaf whose gradient accumulates across backward calls; read with grad().
  Var variable(Tensor t);
  // Leaf bound to a parameter; backward accumulates into p.grad.
  Var parameter(Parameter& p);

  // Accumulates d(loss)/d(leaf) into every gradient-carrying leaf. Throws
  // UsageError if loss is not a single value.
  void backward(Var loss);

  const Tensor& value(Var v) const { return value_of(v.id()); }
  const Tensor& grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Op plumbing.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn, const char* op);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn, const char* op);
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value_of(std::uint32_t id) const;
  // Upstream gradient of a node (valid inside its backward closure).
  const Tensor& out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  // Gradient accumulator for a parent, allocated as zeros on first use.
  Tensor& grad_slot(std::uint32_t id);
  std::uint32_t parent(std::uint32_t id, std::size_t k) const { return nodes_[id].parents[k]; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool leaf = false;
  };
  Var push(Node node);

  std::deque<Node> nodes_;  // stable addresses: values stay valid as the tape grows
  bool grad_enabled_;
};

// Ops. Shape mismatches throw UsageError naming both shapes; non-finite
// outputs throw NumericError.

// [m, k] x [k, n] -> [m, n]
Var matmul(Var a, Var b);
// b's shape must equal a's shape or a trailing suffix of it (broadcast over
// leading axes).
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
// table [V, d], ids -> [n, d]. Throws UsageError for ids outside [0, V).
Var embedding(Var table, std::span<const std::int32_t> ids);
// Normalizes the last axis; gain and bias have the last axis' extent.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12);
Var softmax(Var x);  // last axis, max-subtracted
Var gelu(Var x);     // exact erf form
// Inverted dropout with a mask drawn from seed. p = 0 is the identity.
Var dropout(Var x, double p, std::uint64_t seed);
Var reshape(Var x, Shape shape);
Var transpose(Var x);  // rank 2
Var slice_cols(Var x, std::size_t begin, std::size_t count);  // rank 2
Var concat_cols(const std::vector<Var>& parts);               // rank 2
// -log softmax(logits)[index] over all entries of logits.
Var cross_entropy(Var logits, std::size_t index);

}  // namespace coqac::nn
