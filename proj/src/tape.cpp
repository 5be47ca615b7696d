#include "fhvae/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "fhvae/kernels.hpp"

namespace fhvae {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape) +
                     " and " + shape_to_string(b.shape) + " do not match");
  }
}

std::vector<int> normalize_axes(const char* op, const Tensor& a,
                                const std::vector<int>& axes) {
  if (a.rank() == 0 || a.rank() > 2) {
    throw ShapeError(std::string(op) + ": rank " + std::to_string(a.rank()) +
                     " tensor not supported");
  }
  if (axes.empty()) throw ContractError(std::string(op) + ": no axes given");
  std::vector<int> out = axes;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (int ax : out) {
    if (ax < 0 || ax >= static_cast<int>(a.rank())) {
      throw ContractError(std::string(op) + ": axis " + std::to_string(ax) +
                          " out of range for " + shape_to_string(a.shape));
    }
  }
  return out;
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("tape: invalid node handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("tape: invalid node handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Tensor value, std::vector<int> inputs,
               std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backprop = std::move(backprop);
  for (int in : n.inputs) {
    if (nodes_[static_cast<std::size_t>(in)].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw ShapeError("matmul: shapes " + shape_to_string(av.shape) + " and " +
                     shape_to_string(bv.shape) + " are incompatible");
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out({m, n});
  kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  int ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi, m, k, n](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::matmul_acc_grad_lhs(g.data.data(), t.value_of(bi).data.data(),
                                 t.grad_buf(ai).data.data(), m, k, n);
    kernels::matmul_acc_grad_rhs(t.value_of(ai).data.data(), g.data.data(),
                                 t.grad_buf(bi).data.data(), m, k, n);
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  check_same_shape("add", av, bv);
  Tensor out(av.shape);
  kernels::ew_add(av.data.data(), bv.data.data(), out.data.data(), out.numel());
  int ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc(t.grad_buf(ai).data.data(), g.data.data(), g.numel());
    kernels::acc(t.grad_buf(bi).data.data(), g.data.data(), g.numel());
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  check_same_shape("sub", av, bv);
  Tensor out(av.shape);
  kernels::ew_sub(av.data.data(), bv.data.data(), out.data.data(), out.numel());
  int ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc(t.grad_buf(ai).data.data(), g.data.data(), g.numel());
    kernels::acc_scaled(t.grad_buf(bi).data.data(), -1.0, g.data.data(), g.numel());
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  check_same_shape("mul", av, bv);
  Tensor out(av.shape);
  kernels::ew_mul(av.data.data(), bv.data.data(), out.data.data(), out.numel());
  int ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc_mul(t.grad_buf(ai).data.data(), g.data.data(),
                     t.value_of(bi).data.data(), g.numel());
    kernels::acc_mul(t.grad_buf(bi).data.data(), g.data.data(),
                     t.value_of(ai).data.data(), g.numel());
  });
}

Var Tape::div(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  check_same_shape("div", av, bv);
  Tensor out(av.shape);
  kernels::ew_div(av.data.data(), bv.data.data(), out.data.data(), out.numel());
  int ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    const std::size_t n = g.numel();
    Tensor g_over_b(g.shape);
    kernels::ew_div(g.data.data(), t.value_of(bi).data.data(),
                    g_over_b.data.data(), n);
    kernels::acc(t.grad_buf(ai).data.data(), g_over_b.data.data(), n);
    // d(a/b)/db = -(a/b)/b, using the already computed quotient.
    Tensor tmp(g.shape);
    kernels::ew_mul(g_over_b.data.data(), t.value_of(id).data.data(),
                    tmp.data.data(), n);
    kernels::acc_scaled(t.grad_buf(bi).data.data(), -1.0, tmp.data.data(), n);
  });
}

Var Tape::exp(Var a) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  kernels::ew_exp(av.data.data(), out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc_mul(t.grad_buf(ai).data.data(), g.data.data(),
                     t.value_of(id).data.data(), g.numel());
  });
}

Var Tape::log(Var a) {
  const Tensor& av = node(a).value;
  for (double v : av.data) {
    if (!(v > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(v));
    }
  }
  Tensor out(av.shape);
  kernels::ew_log(av.data.data(), out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    Tensor tmp(g.shape);
    kernels::ew_div(g.data.data(), t.value_of(ai).data.data(), tmp.data.data(),
                    g.numel());
    kernels::acc(t.grad_buf(ai).data.data(), tmp.data.data(), g.numel());
  });
}

Var Tape::tanh(Var a) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  kernels::ew_tanh(av.data.data(), out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc_tanh_bw(t.grad_buf(ai).data.data(), g.data.data(),
                         t.value_of(id).data.data(), g.numel());
  });
}

Var Tape::sigmoid(Var a) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  kernels::ew_sigmoid(av.data.data(), out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc_sigmoid_bw(t.grad_buf(ai).data.data(), g.data.data(),
                            t.value_of(id).data.data(), g.numel());
  });
}

Var Tape::scale(Var a, double c) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  kernels::ew_scale(av.data.data(), c, out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai, c](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc_scaled(t.grad_buf(ai).data.data(), c, g.data.data(), g.numel());
  });
}

Var Tape::add_scalar(Var a, double c) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  kernels::ew_shift(av.data.data(), c, out.data.data(), out.numel());
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc(t.grad_buf(ai).data.data(), g.data.data(), g.numel());
  });
}

Var Tape::broadcast_rows(Var v, std::size_t m) {
  const Tensor& vv = node(v).value;
  if (vv.rank() != 1) {
    throw ShapeError("broadcast_rows: input " + shape_to_string(vv.shape) +
                     " is not rank 1");
  }
  const std::size_t n = vv.shape[0];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    std::memcpy(out.data.data() + i * n, vv.data.data(), n * sizeof(double));
  }
  int vi = v.id;
  return push(std::move(out), {vi}, [vi, m, n](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    Tensor colsum({n});
    kernels::col_sum(g.data.data(), colsum.data.data(), m, n);
    kernels::acc(t.grad_buf(vi).data.data(), colsum.data.data(), n);
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rank = node(parts[0]).value.rank();
  if (rank != 1 && rank != 2) {
    throw ShapeError("concat_cols: rank " + std::to_string(rank) + " not supported");
  }
  std::size_t rows = rank == 2 ? node(parts[0]).value.shape[0] : 1;
  std::size_t total_cols = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    if (pv.rank() != rank || (rank == 2 && pv.shape[0] != rows)) {
      throw ShapeError("concat_cols: incompatible part " + shape_to_string(pv.shape) +
                       " with " + shape_to_string(node(parts[0]).value.shape));
    }
    widths.push_back(pv.shape[rank - 1]);
    total_cols += pv.shape[rank - 1];
    ids.push_back(p.id);
  }
  Tensor out(rank == 2 ? Shape{rows, total_cols} : Shape{total_cols});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const Tensor& pv = value_of(ids[p]);
    for (std::size_t i = 0; i < rows; ++i) {
      std::memcpy(out.data.data() + i * total_cols + offset,
                  pv.data.data() + i * widths[p], widths[p] * sizeof(double));
    }
    offset += widths[p];
  }
  return push(std::move(out), ids,
              [ids, widths, rows, total_cols](Tape& t, int id) {
                const Tensor& g = t.grad_buf(id);
                std::size_t off = 0;
                for (std::size_t p = 0; p < ids.size(); ++p) {
                  Tensor& dst = t.grad_buf(ids[p]);
                  for (std::size_t i = 0; i < rows; ++i) {
                    kernels::acc(dst.data.data() + i * widths[p],
                                 g.data.data() + i * total_cols + off, widths[p]);
                  }
                  off += widths[p];
                }
              });
}

Var Tape::slice_cols(Var a, std::size_t lo, std::size_t hi) {
  const Tensor& av = node(a).value;
  if (av.rank() != 1 && av.rank() != 2) {
    throw ShapeError("slice_cols: rank " + std::to_string(av.rank()) + " not supported");
  }
  const std::size_t cols = av.shape[av.rank() - 1];
  if (lo >= hi || hi > cols) {
    throw ContractError("slice_cols: range [" + std::to_string(lo) + "," +
                        std::to_string(hi) + ") invalid for " +
                        shape_to_string(av.shape));
  }
  const std::size_t rows = av.rank() == 2 ? av.shape[0] : 1;
  const std::size_t w = hi - lo;
  Tensor out(av.rank() == 2 ? Shape{rows, w} : Shape{w});
  for (std::size_t i = 0; i < rows; ++i) {
    std::memcpy(out.data.data() + i * w, av.data.data() + i * cols + lo,
                w * sizeof(double));
  }
  int ai = a.id;
  return push(std::move(out), {ai}, [ai, lo, rows, cols, w](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    Tensor& dst = t.grad_buf(ai);
    for (std::size_t i = 0; i < rows; ++i) {
      kernels::acc(dst.data.data() + i * cols + lo, g.data.data() + i * w, w);
    }
  });
}

Var Tape::slice_rows(Var a, std::size_t lo, std::size_t hi) {
  const Tensor& av = node(a).value;
  if (av.rank() != 2) {
    throw ShapeError("slice_rows: input " + shape_to_string(av.shape) +
                     " is not rank 2");
  }
  if (lo >= hi || hi > av.shape[0]) {
    throw ContractError("slice_rows: range [" + std::to_string(lo) + "," +
                        std::to_string(hi) + ") invalid for " +
                        shape_to_string(av.shape));
  }
  const std::size_t n = av.shape[1];
  Tensor out({hi - lo, n});
  std::memcpy(out.data.data(), av.data.data() + lo * n,
              (hi - lo) * n * sizeof(double));
  int ai = a.id;
  return push(std::move(out), {ai}, [ai, lo, n](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc(t.grad_buf(ai).data.data() + lo * n, g.data.data(), g.numel());
  });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no inputs");
  const std::size_t n = node(rows[0]).value.numel();
  std::vector<int> ids;
  for (Var r : rows) {
    const Tensor& rv = node(r).value;
    if (rv.rank() != 1 || rv.shape[0] != n) {
      throw ShapeError("stack_rows: row " + shape_to_string(rv.shape) +
                       " does not match (" + std::to_string(n) + ")");
    }
    ids.push_back(r.id);
  }
  Tensor out({ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::memcpy(out.data.data() + i * n, value_of(ids[i]).data.data(),
                n * sizeof(double));
  }
  return push(std::move(out), ids, [ids, n](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      kernels::acc(t.grad_buf(ids[i]).data.data(), g.data.data() + i * n, n);
    }
  });
}

Var Tape::reshape(Var a, Shape shape) {
  const Tensor& av = node(a).value;
  if (shape_numel(shape) != av.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(av.shape) +
                     " as " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), av.data);
  int ai = a.id;
  return push(std::move(out), {ai}, [ai](Tape& t, int id) {
    const Tensor& g = t.grad_buf(id);
    kernels::acc(t.grad_buf(ai).data.data(), g.data.data(), g.numel());
  });
}

Var Tape::reduce_sum(Var a, const std::vector<int>& axes) {
  const Tensor& av = node(a).value;
  std::vector<int> ax = normalize_axes("reduce_sum", av, axes);
  int ai = a.id;
  if (av.rank() == 1 || ax.size() == av.rank()) {
    Tensor out = Tensor::scalar(kernels::total_sum(av.data.data(), av.numel()));
    return push(std::move(out), {ai}, [ai](Tape& t, int id) {
      const double g = t.grad_buf(id).data[0];
      Tensor& dst = t.grad_buf(ai);
      for (double& v : dst.data) v += g;
    });
  }
  const std::size_t m = av.shape[0], n = av.shape[1];
  if (ax[0] == 1) {
    Tensor out({m});
    kernels::row_sum(av.data.data(), out.data.data(), m, n);
    return push(std::move(out), {ai}, [ai, m, n](Tape& t, int id) {
      kernels::bcast_cols_acc(t.grad_buf(ai).data.data(), 1.0,
                              t.grad_buf(id).data.data(), m, n);
    });
  }
  Tensor out({n});
  kernels::col_sum(av.data.data(), out.data.data(), m, n);
  return push(std::move(out), {ai}, [ai, m, n](Tape& t, int id) {
    kernels::bcast_rows_acc(t.grad_buf(ai).data.data(), 1.0,
                            t.grad_buf(id).data.data(), m, n);
  });
}

Var Tape::reduce_mean(Var a, const std::vector<int>& axes) {
  const Tensor& av = node(a).value;
  std::vector<int> ax = normalize_axes("reduce_mean", av, axes);
  std::size_t count = 1;
  for (int axis : ax) count *= av.shape[static_cast<std::size_t>(axis)];
  if (count == 0) throw ContractError("reduce_mean: empty reduction");
  Var s = reduce_sum(a, ax);
  return scale(s, 1.0 / static_cast<double>(count));
}

Var Tape::sum_all(Var a) {
  const Tensor& av = node(a).value;
  if (av.rank() == 0) {
    int ai = a.id;
    Tensor out = av;
    return push(std::move(out), {ai}, [ai](Tape& t, int id) {
      kernels::acc(t.grad_buf(ai).data.data(), t.grad_buf(id).data.data(), 1);
    });
  }
  std::vector<int> axes(av.rank());
  for (std::size_t i = 0; i < av.rank(); ++i) axes[i] = static_cast<int>(i);
  return reduce_sum(a, axes);
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.numel() != 1) {
    throw ContractError("backward: loss has shape " +
                        shape_to_string(ln.value.shape) + ", expected a scalar");
  }
  // Reachability pass so each node's rule runs at most once and only when it
  // can influence the loss.
  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<int> stack{loss.id};
  reachable[static_cast<std::size_t>(loss.id)] = 1;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    for (int in : nodes_[static_cast<std::size_t>(id)].inputs) {
      if (!reachable[static_cast<std::size_t>(in)]) {
        reachable[static_cast<std::size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].grad = Tensor(nodes_[i].value.shape);
  }
  nodes_[static_cast<std::size_t>(loss.id)].grad.data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (reachable[static_cast<std::size_t>(id)] && n.backprop) {
      n.backprop(*this, id);
    }
  }
  ran_backward_ = true;
}

const Tensor& Tape::grad(Var v) const {
  if (!ran_backward_) throw ContractError("grad: backward has not run");
  return node(v).grad;
}

double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  Tape tape;
  Var xv = tape.leaf(x, true);
  Var loss = f(tape, xv);
  if (tape.value(loss).numel() != 1) {
    throw ContractError("finite_diff_check: f must produce a scalar");
  }
  if (!std::isfinite(tape.value(loss).item())) {
    throw NumericError("finite_diff_check: non-finite value at base point");
  }
  tape.backward(loss);
  const Tensor analytic = tape.grad(xv);

  auto eval = [&f](const Tensor& point) {
    Tape t;
    Var pv = t.leaf(point);
    Var l = f(t, pv);
    double v = t.value(l).item();
    if (!std::isfinite(v)) {
      throw NumericError("finite_diff_check: non-finite value at probe point");
    }
    return v;
  };

  Tensor probe = x;
  double max_err = 0.0;
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = eval(probe);
    probe[i] = orig - h;
    const double fm = eval(probe);
    probe[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(central));
    max_err = std::max(max_err, std::abs(analytic[i] - central) / denom);
  }
  return max_err;
}

}  // namespace fhvae
