#include "pier/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "pier/errors.hpp"

namespace pier {

const Tensor& Var::value() const { return graph_->value(*this); }

const Tensor& Gradients::of(const Parameter& p) const {
  for (const auto& [param, grad] : entries_) {
    if (param == &p) return grad;
  }
  throw ContractError("no gradient recorded for parameter '" + p.name + "'");
}

bool Gradients::contains(const Parameter& p) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == &p; });
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const Parameter& p) {
  if (auto it = bound_index_.find(&p); it != bound_index_.end()) {
    return Var(this, bound_[it->second].second);
  }
  nodes_.push_back(Node{p.value, {}, {}, record_});
  const std::size_t id = nodes_.size() - 1;
  bound_index_.emplace(&p, bound_.size());
  bound_.emplace_back(&p, id);
  return Var(this, id);
}

Var Graph::emit(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return emit(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn));
}

Var Graph::emit(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.graph() != this) throw ContractError("operand belongs to a different graph");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  needs = needs && record_;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad(Var v) {
  Node& node = nodes_[v.id()];
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

Gradients Graph::backward(Var loss) {
  if (!record_) throw ContractError("backward() on a graph built with record=false");
  if (loss.graph() != this) throw ContractError("loss belongs to a different graph");
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(value(loss).shape()));
  }
  grad(loss)[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, Var(this, id));
  }
  Gradients out;
  out.entries_.reserve(bound_.size());
  for (const auto& [param, id] : bound_) {
    Node& node = nodes_[id];
    if (node.grad.shape() != node.value.shape()) {
      out.entries_.emplace_back(param, Tensor(node.value.shape()));
    } else {
      out.entries_.emplace_back(param, std::move(node.grad));
    }
  }
  return out;
}

namespace ag {
namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const char* op, Var a) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(a.shape()));
  }
}

Graph& graph_of(Var a) { return *a.graph(); }

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernel::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  return graph_of(a).emit(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) kernel::gemm_nt(go.data(), g.value(b).data(), g.grad(a).data(), m, n, k);
    if (g.needs_grad(b)) kernel::gemm_tn(g.value(a).data(), go.data(), g.grad(b).data(), m, k, n);
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    for (Var p : {a, b}) {
      if (!g.needs_grad(p)) continue;
      Tensor& gp = g.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      const Tensor& bv = g.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      const Tensor& av = g.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return graph_of(a).emit(std::move(out), {a}, [a, s](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * go[i];
  });
}

Var add_bias(Var x, Var bias) {
  require_matrix("add_bias", x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (bias.value().size() != m) {
    throw DimensionError("add_bias: " + shape_string(xv.shape()) + " + " +
                         shape_string(bias.shape()));
  }
  Tensor out = xv;
  const double* b = bias.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) row[c] += b[c];
  }
  return graph_of(x).emit(std::move(out), {x, bias}, [x, bias, n, m](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(x)) {
      Tensor& gx = g.grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
    if (g.needs_grad(bias)) {
      Tensor& gb = g.grad(bias);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = go.data() + r * m;
        for (std::size_t c = 0; c < m; ++c) gb[c] += row[c];
      }
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return graph_of(x).emit(std::move(out), {x}, [x](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (y[i] > 0.0) gx[i] += go[i];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return graph_of(x).emit(std::move(out), {x}, [x](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

Var softmax_rows(Var x) {
  Tensor out = pier::softmax_rows(x.value());
  return graph_of(x).emit(std::move(out), {x}, [x](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(x);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double* yr = y.data() + r * n;
      const double* gr = go.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += yr[c] * gr[c];
      double* out_row = gx.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) out_row[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var block_attention(Var q, Var k, Var v, std::size_t block) {
  require_matrix("attention", q);
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t rows = qv.rows(), d = qv.cols();
  if (d == 0) throw DimensionError("attention: feature dimension must be >= 1");
  if (block == 0 || rows % block != 0) {
    throw DimensionError("attention: " + std::to_string(rows) + " rows do not split into blocks of " +
                         std::to_string(block));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t blocks = rows / block;
  // Attention weights, one [block x block] matrix per block.
  std::vector<double> weights(blocks * block * block);
  Tensor out({rows, d});
  std::vector<double> logits(block);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t base = b * block;
    for (std::size_t i = 0; i < block; ++i) {
      const double* qi = qv.data() + (base + i) * d;
      for (std::size_t j = 0; j < block; ++j) {
        const double* kj = kv.data() + (base + j) * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
        logits[j] = s * scale;
      }
      double* w = weights.data() + (b * block + i) * block;
      kernel::softmax_row(logits.data(), w, block);
      double* oi = out.data() + (base + i) * d;
      for (std::size_t j = 0; j < block; ++j) {
        const double* vj = vv.data() + (base + j) * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += w[j] * vj[c];
      }
    }
  }
  return graph_of(q).emit(
      std::move(out), {q, k, v},
      [q, k, v, block, blocks, d, scale, weights = std::move(weights)](Graph& g, Var self) {
        const Tensor& go = g.grad(self);
        const Tensor& qv = g.value(q);
        const Tensor& kv = g.value(k);
        const Tensor& vv = g.value(v);
        Tensor& gq = g.grad(q);
        Tensor& gk = g.grad(k);
        Tensor& gv = g.grad(v);
        std::vector<double> dw(block), ds(block);
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::size_t base = b * block;
          for (std::size_t i = 0; i < block; ++i) {
            const double* w = weights.data() + (b * block + i) * block;
            const double* goi = go.data() + (base + i) * d;
            // dV_j += w_ij * dO_i ; dW_ij = dO_i . V_j
            for (std::size_t j = 0; j < block; ++j) {
              const double* vj = vv.data() + (base + j) * d;
              double* gvj = gv.data() + (base + j) * d;
              double acc = 0.0;
              for (std::size_t c = 0; c < d; ++c) {
                gvj[c] += w[j] * goi[c];
                acc += goi[c] * vj[c];
              }
              dw[j] = acc;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < block; ++j) dot += w[j] * dw[j];
            for (std::size_t j = 0; j < block; ++j) ds[j] = w[j] * (dw[j] - dot) * scale;
            const double* qi = qv.data() + (base + i) * d;
            double* gqi = gq.data() + (base + i) * d;
            for (std::size_t j = 0; j < block; ++j) {
              const double* kj = kv.data() + (base + j) * d;
              double* gkj = gk.data() + (base + j) * d;
              for (std::size_t c = 0; c < d; ++c) {
                gqi[c] += ds[j] * kj[c];
                gkj[c] += ds[j] * qi[c];
              }
            }
          }
        }
      });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  require_matrix("gather_rows", table);
  const Tensor& tv = table.value();
  const std::size_t n = tv.rows(), d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw LookupError("gather_rows: id " + std::to_string(id) + " outside table of " +
                        std::to_string(n) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(id) * d, d, out.data() + r * d);
  }
  return graph_of(table).emit(
      std::move(out), {table},
      [table, d, idx = std::vector<std::int32_t>(ids.begin(), ids.end())](Graph& g, Var self) {
        const Tensor& go = g.grad(self);
        Tensor& gt = g.grad(table);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          double* dst = gt.data() + static_cast<std::size_t>(idx[r]) * d;
          const double* src = go.data() + r * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return graph_of(x).emit(std::move(out), {x}, [x](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix("concat_cols", p);
    if (p.value().rows() != n) {
      throw DimensionError("concat_cols: row counts " + std::to_string(n) + " vs " +
                           std::to_string(p.value().rows()));
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(pv.data() + r * widths[i], widths[i], out.data() + r * total + offset);
    }
    offset += widths[i];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return graph_of(parts.front())
      .emit(std::move(out), parts,
            [inputs, widths, n, total](Graph& g, Var self) {
              const Tensor& go = g.grad(self);
              std::size_t offset = 0;
              for (std::size_t i = 0; i < inputs.size(); ++i) {
                if (g.needs_grad(inputs[i])) {
                  Tensor& gp = g.grad(inputs[i]);
                  for (std::size_t r = 0; r < n; ++r) {
                    const double* src = go.data() + r * total + offset;
                    double* dst = gp.data() + r * widths[i];
                    for (std::size_t c = 0; c < widths[i]; ++c) dst[c] += src[c];
                  }
                }
                offset += widths[i];
              }
            });
}

Var repeat_rows(Var x, std::size_t times) {
  require_matrix("repeat_rows", x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out({n * times, m});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      std::copy_n(xv.data() + r * m, m, out.data() + (r * times + t) * m);
    }
  }
  return graph_of(x).emit(std::move(out), {x}, [x, n, m, times](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      double* dst = gx.data() + r * m;
      for (std::size_t t = 0; t < times; ++t) {
        const double* src = go.data() + (r * times + t) * m;
        for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
      }
    }
  });
}

Var mul_col(Var x, Var s) {
  require_matrix("mul_col", x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (s.value().size() != n) {
    throw DimensionError("mul_col: " + shape_string(xv.shape()) + " by " +
                         shape_string(s.shape()));
  }
  Tensor out = xv;
  const Tensor& sv = s.value();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) row[c] *= sv[r];
  }
  return graph_of(x).emit(std::move(out), {x, s}, [x, s, n, m](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& xv = g.value(x);
    const Tensor& sv = g.value(s);
    const bool need_x = g.needs_grad(x), need_s = g.needs_grad(s);
    for (std::size_t r = 0; r < n; ++r) {
      const double* gr = go.data() + r * m;
      if (need_x) {
        double* dst = g.grad(x).data() + r * m;
        for (std::size_t c = 0; c < m; ++c) dst[c] += gr[c] * sv[r];
      }
      if (need_s) {
        const double* xr = xv.data() + r * m;
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) acc += gr[c] * xr[c];
        g.grad(s)[r] += acc;
      }
    }
  });
}

Var sum_row_groups(Var x, std::size_t group) {
  require_matrix("sum_row_groups", x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (group == 0 || n % group != 0) {
    throw DimensionError("sum_row_groups: " + std::to_string(n) + " rows not divisible by " +
                         std::to_string(group));
  }
  Tensor out({n / group, m});
  for (std::size_t r = 0; r < n; ++r) {
    double* dst = out.data() + (r / group) * m;
    const double* src = xv.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
  }
  return graph_of(x).emit(std::move(out), {x}, [x, n, m, group](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      const double* src = go.data() + (r / group) * m;
      double* dst = gx.data() + r * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
    }
  });
}

Var row_mean(Var x) {
  require_matrix("row_mean", x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (m == 0) throw DimensionError("row_mean: zero columns");
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += xv.at(r, c);
    out[r] = acc / static_cast<double>(m);
  }
  return graph_of(x).emit(std::move(out), {x}, [x, n, m](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(x);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c) gx.at(r, c) += go[r] * inv;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  require_matrix("slice_rows", x);
  const Tensor& xv = x.value();
  const std::size_t m = xv.cols();
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_string(xv.shape()));
  }
  Tensor out({end - begin, m});
  std::copy(xv.data() + begin * m, xv.data() + end * m, out.data());
  return graph_of(x).emit(std::move(out), {x}, [x, begin, m](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    double* dst = g.grad(x).data() + begin * m;
    for (std::size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return graph_of(x).emit(Tensor::scalar(acc), {x}, [x](Graph& g, Var self) {
    const double go = g.grad(self)[0];
    Tensor& gx = g.grad(x);
    for (double& v : gx.values()) v += go;
  });
}

Var bce_sum(Var prob, std::span<const double> labels) {
  const Tensor& pv = prob.value();
  if (pv.size() != labels.size()) {
    throw DimensionError("bce: " + std::to_string(pv.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  static constexpr double kLo = 1e-12, kHi = 1.0 - 1e-12;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kLo, kHi);
    acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return graph_of(prob).emit(
      Tensor::scalar(acc), {prob},
      [prob, y = std::vector<double>(labels.begin(), labels.end())](Graph& g, Var self) {
        const double go = g.grad(self)[0];
        const Tensor& pv = g.value(prob);
        Tensor& gp = g.grad(prob);
        for (std::size_t i = 0; i < gp.size(); ++i) {
          if (pv[i] < kLo || pv[i] > kHi) continue;
          const double p = pv[i];
          gp[i] += go * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
        }
      });
}

}  // namespace ag
}  // namespace pier
