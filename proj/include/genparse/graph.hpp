#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "genparse/tensor.hpp"

namespace genparse {

// Handle to a value recorded on a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
  bool operator==(const Var&) const = default;
};

// Reverse-mode tape. Nodes are appended in execution order, so the node list
// is already topologically sorted; backward() walks it once in reverse.
//
// A graph built with record_backward = false keeps forward values only and is
// what decoding uses.
template <typename Real>
class Graph {
 public:
  using T = Tensor<Real>;

  explicit Graph(bool record_backward = true) : record_(record_backward) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(T value);
  Var scalar(Real v) { return constant(T::scalar(v)); }
  // The same parameter always maps to the same node within one graph.
  Var param(Parameter<Real>& p);
  // Row `index` of an embedding table, returned as a column vector.
  Var lookup(Parameter<Real>& table, int index);

  Var matmul(Var a, Var b);
  // Same shapes, or `b` a column vector broadcast across the columns of `a`.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  // 1x1 `s` times any `x`.
  Var scale(Var s, Var x);
  Var one_minus(Var x);

  Var concat_rows(std::span<const Var> parts);
  Var concat_rows(std::initializer_list<Var> parts) {
    return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var x, int begin, int count);
  Var column(Var x, int col);
  // Same row-major data under a new shape.
  Var reshape(Var x, int rows, int cols);

  Var tanh(Var x);
  Var sigmoid(Var x);
  Var log(Var x);
  // Column-wise.
  Var softmax(Var x);
  Var log_softmax(Var x);

  Var sum(Var x);
  Var pick(Var x, int row);
  // Sum of the given rows of a column vector (rows may repeat).
  Var gather_sum(Var x, std::span<const int> rows);
  Var mean(std::span<const Var> scalars);

  const T& value(Var v) const;
  Real scalar_value(Var v) const { return value(v)[0]; }
  // Gradient after backward(); empty tensor if the node received none.
  const T& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Accumulates d(loss)/d(param) into every Parameter touched by the graph.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool records_backward() const { return record_; }

 private:
  struct Node {
    T value;
    const T* external = nullptr;  // parameter value, not copied
    T grad;
    std::function<void(Graph&, Node&)> backward;
  };

  Var push(T value, std::function<void(Graph&, Node&)> backward);
  T& grad_of(Var v);
  const T& val(Var v) const { return value(v); }

  bool record_;
  std::deque<Node> nodes_;  // stable references while the tape grows
  std::unordered_map<const Parameter<Real>*, Var> param_nodes_;
};

// LSTM cell with gates packed as [input; forget; candidate; output] rows of a
// single (4H x (in + H)) weight and 4H bias.
template <typename Real>
struct LstmCell {
  Parameter<Real>* weight = nullptr;
  Parameter<Real>* bias = nullptr;
  int input_size = 0;
  int hidden_size = 0;

  static LstmCell create(ParameterStore<Real>& store, const std::string& name, int input_size,
                         int hidden_size);
};

template <typename Real>
struct LstmState {
  Var h;
  Var c;
};

template <typename Real>
LstmState<Real> lstm_step(Graph<Real>& g, const LstmCell<Real>& cell, Var x,
                          const LstmState<Real>& prev);

}  // namespace genparse
