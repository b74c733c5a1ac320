#include "genparse/graph.hpp"

#include <algorithm>
#include <cmath>

#include "genparse/kernels.hpp"

namespace genparse {

namespace {

template <typename Real>
void require_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename Real>
void add_into(Tensor<Real>& dst, const Tensor<Real>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename Real>
Var Graph<Real>::push(T value, std::function<void(Graph&, Node&)> backward) {
  if (!value.all_finite()) throw Error("non-finite value produced on tape");
  Node node;
  node.value = std::move(value);
  if (record_) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename Real>
const Tensor<Real>& Graph<Real>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.value;
}

template <typename Real>
Tensor<Real>& Graph<Real>::grad_of(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const T& shape = n.external ? *n.external : n.value;
    n.grad = T(shape.rows(), shape.cols());
  }
  return n.grad;
}

template <typename Real>
Var Graph<Real>::constant(T value) {
  return push(std::move(value), nullptr);
}

template <typename Real>
Var Graph<Real>::param(Parameter<Real>& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  if (!p.value.all_finite()) throw Error("parameter '" + p.name + "' holds non-finite values");
  Node node;
  node.external = &p.value;
  if (record_) {
    node.backward = [&p](Graph&, Node& self) { add_into(p.grad, self.grad); };
  }
  nodes_.push_back(std::move(node));
  Var v{static_cast<int>(nodes_.size()) - 1};
  param_nodes_.emplace(&p, v);
  return v;
}

template <typename Real>
Var Graph<Real>::lookup(Parameter<Real>& table, int index) {
  const T& tv = table.value;
  if (index < 0 || index >= tv.rows()) {
    throw ShapeError("lookup: index " + std::to_string(index) + " outside table " +
                     tv.shape_string());
  }
  const int d = tv.cols();
  T out(d, 1);
  std::copy_n(tv.data() + std::size_t(index) * d, d, out.data());
  return push(std::move(out), [&table, index, d](Graph&, Node& self) {
    Real* row = table.grad.data() + std::size_t(index) * d;
    for (int i = 0; i < d; ++i) row[i] += self.grad[i];
  });
}

template <typename Real>
Var Graph<Real>::matmul(Var a, Var b) {
  const T& av = val(a);
  const T& bv = val(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  T out(m, n);
  kernels::matmul<Real>(av.values(), bv.values(), out.values(), m, k, n);
  return push(std::move(out), [a, b, m, k, n](Graph& g, Node& self) {
    kernels::matmul_grad_a<Real>(self.grad.values(), g.val(b).values(), g.grad_of(a).values(),
                                 m, k, n);
    kernels::matmul_grad_b<Real>(g.val(a).values(), self.grad.values(), g.grad_of(b).values(),
                                 m, k, n);
  });
}

template <typename Real>
Var Graph<Real>::add(Var a, Var b) {
  const T& av = val(a);
  const T& bv = val(b);
  if (av.same_shape(bv)) {
    T out = av;
    add_into(out, bv);
    return push(std::move(out), [a, b](Graph& g, Node& self) {
      add_into(g.grad_of(a), self.grad);
      add_into(g.grad_of(b), self.grad);
    });
  }
  if (bv.cols() != 1 || bv.rows() != av.rows()) {
    throw ShapeError("add: shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  const int rows = av.rows(), cols = av.cols();
  T out = av;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) += bv[r];
  return push(std::move(out), [a, b, rows, cols](Graph& g, Node& self) {
    add_into(g.grad_of(a), self.grad);
    T& gb = g.grad_of(b);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) gb[r] += self.grad(r, c);
  });
}

template <typename Real>
Var Graph<Real>::sub(Var a, Var b) {
  const T& av = val(a);
  const T& bv = val(b);
  require_same_shape("sub", av, bv);
  T out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), [a, b](Graph& g, Node& self) {
    add_into(g.grad_of(a), self.grad);
    T& gb = g.grad_of(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
  });
}

template <typename Real>
Var Graph<Real>::cmul(Var a, Var b) {
  const T& av = val(a);
  const T& bv = val(b);
  require_same_shape("cmul", av, bv);
  T out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), [a, b](Graph& g, Node& self) {
    const T& av = g.val(a);
    const T& bv = g.val(b);
    T& ga = g.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i];
    T& gb = g.grad_of(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * av[i];
  });
}

template <typename Real>
Var Graph<Real>::scale(Var s, Var x) {
  const T& sv = val(s);
  const T& xv = val(x);
  if (sv.size() != 1) throw ShapeError("scale: expected 1x1 scale, got " + sv.shape_string());
  const Real k = sv[0];
  T out = xv;
  for (auto& v : out.values()) v *= k;
  return push(std::move(out), [s, x](Graph& g, Node& self) {
    const T& xv = g.val(x);
    const Real k = g.val(s)[0];
    Real ds = 0;
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * k;
      ds += self.grad[i] * xv[i];
    }
    g.grad_of(s)[0] += ds;
  });
}

template <typename Real>
Var Graph<Real>::one_minus(Var x) {
  T out = val(x);
  for (auto& v : out.values()) v = Real(1) - v;
  return push(std::move(out), [x](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= self.grad[i];
  });
}

template <typename Real>
Var Graph<Real>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int cols = val(parts[0]).cols();
  int rows = 0;
  for (Var p : parts) {
    const T& pv = val(p);
    if (pv.cols() != cols) {
      throw ShapeError("concat_rows: shape mismatch " + val(parts[0]).shape_string() + " vs " +
                       pv.shape_string());
    }
    rows += pv.rows();
  }
  T out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const T& pv = val(p);
    std::copy(pv.data(), pv.data() + pv.size(), out.data() + offset);
    offset += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), [inputs = std::move(inputs)](Graph& g, Node& self) {
    std::size_t offset = 0;
    for (Var p : inputs) {
      T& gp = g.grad_of(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[offset + i];
      offset += gp.size();
    }
  });
}

template <typename Real>
Var Graph<Real>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = val(parts[0]).rows();
  int cols = 0;
  for (Var p : parts) {
    const T& pv = val(p);
    if (pv.rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " + val(parts[0]).shape_string() + " vs " +
                       pv.shape_string());
    }
    cols += pv.cols();
  }
  T out(rows, cols);
  int c0 = 0;
  for (Var p : parts) {
    const T& pv = val(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < pv.cols(); ++c) out(r, c0 + c) = pv(r, c);
    c0 += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), [inputs = std::move(inputs)](Graph& g, Node& self) {
    int c0 = 0;
    for (Var p : inputs) {
      T& gp = g.grad_of(p);
      for (int r = 0; r < gp.rows(); ++r)
        for (int c = 0; c < gp.cols(); ++c) gp(r, c) += self.grad(r, c0 + c);
      c0 += gp.cols();
    }
  });
}

template <typename Real>
Var Graph<Real>::slice_rows(Var x, int begin, int count) {
  const T& xv = val(x);
  if (begin < 0 || count < 0 || begin + count > xv.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + xv.shape_string());
  }
  const int cols = xv.cols();
  T out(count, cols);
  std::copy_n(xv.data() + std::size_t(begin) * cols, std::size_t(count) * cols, out.data());
  return push(std::move(out), [x, begin, cols](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    Real* dst = gx.data() + std::size_t(begin) * cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

template <typename Real>
Var Graph<Real>::column(Var x, int col) {
  const T& xv = val(x);
  if (col < 0 || col >= xv.cols()) {
    throw ShapeError("column: index " + std::to_string(col) + " outside " + xv.shape_string());
  }
  T out(xv.rows(), 1);
  for (int r = 0; r < xv.rows(); ++r) out[r] = xv(r, col);
  return push(std::move(out), [x, col](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (int r = 0; r < gx.rows(); ++r) gx(r, col) += self.grad[r];
  });
}

template <typename Real>
Var Graph<Real>::reshape(Var x, int rows, int cols) {
  const T& xv = val(x);
  if (std::size_t(rows) * cols != xv.size()) {
    throw ShapeError("reshape: cannot view " + xv.shape_string() + " as [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  T out(rows, cols, std::vector<Real>(xv.values().begin(), xv.values().end()));
  return push(std::move(out), [x](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename Real>
Var Graph<Real>::tanh(Var x) {
  T out = val(x);
  for (auto& v : out.values()) v = std::tanh(v);
  return push(std::move(out), [x](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const Real y = self.value[i];
      gx[i] += self.grad[i] * (Real(1) - y * y);
    }
  });
}

template <typename Real>
Var Graph<Real>::sigmoid(Var x) {
  T out = val(x);
  for (auto& v : out.values()) {
    v = v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
  }
  return push(std::move(out), [x](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const Real y = self.value[i];
      gx[i] += self.grad[i] * y * (Real(1) - y);
    }
  });
}

template <typename Real>
Var Graph<Real>::log(Var x) {
  T out = val(x);
  for (auto& v : out.values()) {
    if (!(v > 0)) throw Error("log of non-positive value");
    v = std::log(v);
  }
  return push(std::move(out), [x](Graph& g, Node& self) {
    const T& xv = g.val(x);
    T& gx = g.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] / xv[i];
  });
}

template <typename Real>
Var Graph<Real>::softmax(Var x) {
  T out = val(x);
  const int rows = out.rows(), cols = out.cols();
  for (int c = 0; c < cols; ++c) {
    Real mx = out(0, c);
    for (int r = 1; r < rows; ++r) mx = std::max(mx, out(r, c));
    Real z = 0;
    for (int r = 0; r < rows; ++r) z += (out(r, c) = std::exp(out(r, c) - mx));
    for (int r = 0; r < rows; ++r) out(r, c) /= z;
  }
  return push(std::move(out), [x, rows, cols](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (int c = 0; c < cols; ++c) {
      Real dot = 0;
      for (int r = 0; r < rows; ++r) dot += self.grad(r, c) * self.value(r, c);
      for (int r = 0; r < rows; ++r) gx(r, c) += self.value(r, c) * (self.grad(r, c) - dot);
    }
  });
}

template <typename Real>
Var Graph<Real>::log_softmax(Var x) {
  T out = val(x);
  const int rows = out.rows(), cols = out.cols();
  for (int c = 0; c < cols; ++c) {
    Real mx = out(0, c);
    for (int r = 1; r < rows; ++r) mx = std::max(mx, out(r, c));
    Real z = 0;
    for (int r = 0; r < rows; ++r) z += std::exp(out(r, c) - mx);
    const Real lse = mx + std::log(z);
    for (int r = 0; r < rows; ++r) out(r, c) -= lse;
  }
  return push(std::move(out), [x, rows, cols](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (int c = 0; c < cols; ++c) {
      Real total = 0;
      for (int r = 0; r < rows; ++r) total += self.grad(r, c);
      for (int r = 0; r < rows; ++r) {
        gx(r, c) += self.grad(r, c) - std::exp(self.value(r, c)) * total;
      }
    }
  });
}

template <typename Real>
Var Graph<Real>::sum(Var x) {
  Real s = 0;
  for (Real v : val(x).values()) s += v;
  return push(T::scalar(s), [x](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (auto& v : gx.values()) v += self.grad[0];
  });
}

template <typename Real>
Var Graph<Real>::pick(Var x, int row) {
  const T& xv = val(x);
  if (xv.cols() != 1 || row < 0 || row >= xv.rows()) {
    throw ShapeError("pick: row " + std::to_string(row) + " outside " + xv.shape_string());
  }
  return push(T::scalar(xv[row]), [x, row](Graph& g, Node& self) {
    g.grad_of(x)[row] += self.grad[0];
  });
}

template <typename Real>
Var Graph<Real>::gather_sum(Var x, std::span<const int> rows) {
  const T& xv = val(x);
  Real s = 0;
  for (int r : rows) {
    if (xv.cols() != 1 || r < 0 || r >= xv.rows()) {
      throw ShapeError("gather_sum: row " + std::to_string(r) + " outside " + xv.shape_string());
    }
    s += xv[r];
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return push(T::scalar(s), [x, idx = std::move(idx)](Graph& g, Node& self) {
    T& gx = g.grad_of(x);
    for (int r : idx) gx[r] += self.grad[0];
  });
}

template <typename Real>
Var Graph<Real>::mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("mean: no inputs");
  Real s = 0;
  for (Var v : scalars) {
    if (val(v).size() != 1) throw ShapeError("mean: expected scalars, got " + val(v).shape_string());
    s += val(v)[0];
  }
  const Real inv = Real(1) / Real(scalars.size());
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return push(T::scalar(s * inv), [inputs = std::move(inputs), inv](Graph& g, Node& self) {
    for (Var v : inputs) g.grad_of(v)[0] += self.grad[0] * inv;
  });
}

template <typename Real>
void Graph<Real>::backward(Var loss) {
  if (!record_) throw Error("backward on a graph built without gradient recording");
  if (val(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + val(loss).shape_string());
  }
  for (auto& n : nodes_) n.grad = T();
  grad_of(loss)[0] = Real(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n);
  }
}

template <typename Real>
LstmCell<Real> LstmCell<Real>::create(ParameterStore<Real>& store, const std::string& name,
                                      int input_size, int hidden_size) {
  LstmCell cell;
  cell.weight = &store.add(name + ".W", 4 * hidden_size, input_size + hidden_size);
  cell.bias = &store.add(name + ".b", 4 * hidden_size, 1, Init::kZero);
  cell.input_size = input_size;
  cell.hidden_size = hidden_size;
  return cell;
}

template <typename Real>
LstmState<Real> lstm_step(Graph<Real>& g, const LstmCell<Real>& cell, Var x,
                          const LstmState<Real>& prev) {
  const int h = cell.hidden_size;
  if (g.value(x).rows() != cell.input_size || g.value(prev.h).rows() != h ||
      g.value(prev.c).rows() != h) {
    throw ShapeError("lstm_step: input " + g.value(x).shape_string() + ", state " +
                     g.value(prev.h).shape_string() + " for cell of input " +
                     std::to_string(cell.input_size) + ", hidden " + std::to_string(h));
  }
  const Var z = g.add(g.matmul(g.param(*cell.weight), g.concat_rows({x, prev.h})),
                      g.param(*cell.bias));
  const Var in_gate = g.sigmoid(g.slice_rows(z, 0, h));
  const Var forget_gate = g.sigmoid(g.slice_rows(z, h, h));
  const Var candidate = g.tanh(g.slice_rows(z, 2 * h, h));
  const Var out_gate = g.sigmoid(g.slice_rows(z, 3 * h, h));
  const Var c = g.add(g.cmul(forget_gate, prev.c), g.cmul(in_gate, candidate));
  return {g.cmul(out_gate, g.tanh(c)), c};
}

template class Graph<float>;
template class Graph<double>;
template struct LstmCell<float>;
template struct LstmCell<double>;
template LstmState<float> lstm_step(Graph<float>&, const LstmCell<float>&, Var,
                                    const LstmState<float>&);
template LstmState<double> lstm_step(Graph<double>&, const LstmCell<double>&, Var,
                                     const LstmState<double>&);

}  // namespace genparse
