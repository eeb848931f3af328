#pragma once

// Record-and-replay reverse-mode differentiation over pier::Tensor.
//
// A Graph owns every intermediate value produced while building a loss.
// Parameters live outside the graph (in model structs) and enter it through
// Graph::parameter(); backward() returns one gradient per parameter that was
// bound, zero-filled when the loss does not reach it.
//
//   Graph g;
//   Var x = g.parameter(weights);
//   Var loss = ag::sum(ag::mul(x, x));
//   Gradients grads = g.backward(loss);   // grads.of(weights) == 2 * weights
//
// A Graph built with record=false only evaluates; it keeps no backward
// closures and refuses backward().

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pier/tensor.hpp"

namespace pier {

/// Named trainable tensor.
struct Parameter {
  std::string name;
  Tensor value;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient per bound parameter, in binding order.
class Gradients {
 public:
  const Tensor& of(const Parameter& p) const;
  bool contains(const Parameter& p) const noexcept;
  const std::vector<std::pair<const Parameter*, Tensor>>& entries() const noexcept {
    return entries_;
  }

 private:
  friend class Graph;
  std::vector<std::pair<const Parameter*, Tensor>> entries_;
};

class Graph {
 public:
  /// Called with the graph and the node being differentiated.
  using BackwardFn = std::function<void(Graph&, Var)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor value);
  /// Binds a parameter; binding the same parameter twice returns the same node.
  Var parameter(const Parameter& p);

  /// Reverse sweep from a scalar (single-element) node.
  Gradients backward(Var loss);

  // Used by op implementations.
  Var emit(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var emit(Tensor value, std::span<const Var> parents, BackwardFn fn);
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad(Var v);
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool needs_grad = false;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::pair<const Parameter*, std::size_t>> bound_;
  std::unordered_map<const Parameter*, std::size_t> bound_index_;
};

namespace ag {

enum class Activation { kIdentity, kRelu, kSigmoid };

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// x[n x m] + bias[m] broadcast over rows.
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var sigmoid(Var x);
Var activate(Var x, Activation act);
Var softmax_rows(Var x);
/// Blockwise softmax(Q K^T / sqrt(d)) V: rows [b*block, (b+1)*block) attend
/// only within their block. block == rows gives plain scaled-dot attention.
Var block_attention(Var q, Var k, Var v, std::size_t block);
/// Rows of `table` selected by `ids`; backward scatter-adds.
Var gather_rows(Var table, std::span<const std::int32_t> ids);
Var reshape(Var x, Shape shape);
Var concat_cols(std::span<const Var> parts);
/// Each row repeated `times` consecutive times.
Var repeat_rows(Var x, std::size_t times);
/// Row r of x[n x m] scaled by s[r] (s is n x 1).
Var mul_col(Var x, Var s);
/// Sums consecutive groups of `group` rows: [n x m] -> [n/group x m].
Var sum_row_groups(Var x, std::size_t group);
/// Mean of each row: [n x m] -> [n x 1].
Var row_mean(Var x);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
/// Sum of all entries as a one-element tensor.
Var sum(Var x);
/// Sum over entries of binary cross-entropy; probabilities are clamped to
/// [1e-12, 1 - 1e-12] before the log.
Var bce_sum(Var prob, std::span<const double> labels);

}  // namespace ag

}  // namespace pier
