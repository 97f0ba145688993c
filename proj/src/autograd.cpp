#include "coqac/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "coqac/error.hpp"

namespace coqac::nn {

// ---------------------------------------------------------------- parameters

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw UsageError("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  Tensor grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter " + std::string(name));
  return params_[it->second];
}

const Parameter& ParameterSet::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter " + std::string(name));
  return params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.size() != p.value.size() || p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    p.grad.fill(0.0);
  }
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ParameterSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params_) {
      for (double& g : p.grad.values()) g *= f;
    }
  }
  return norm;
}

// --------------------------------------------------------------------- graph

const Tensor& Var::value() const { return graph_->value_of(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  n.leaf = true;
  return push(std::move(n));
}

Var Graph::constant_ref(const Tensor& t) {
  Node n;
  n.external = &t;
  n.leaf = true;
  return push(std::move(n));
}

Var Graph::variable(Tensor t) {
  Node n;
  n.value = std::move(t);
  n.leaf = true;
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.leaf = true;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  return push(std::move(n));
}

const Tensor& Graph::value_of(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.param != nullptr ? n.param->grad : n.grad;
}

Tensor& Graph::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  Tensor& g = n.param != nullptr ? n.param->grad : n.grad;
  const Tensor& v = value_of(id);
  if (g.size() != v.size() || g.shape() != v.shape()) g = Tensor(v.shape());
  return g;
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn, const char* op) {
  return record(std::move(value), std::vector<Var>(parents), std::move(fn), op);
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.graph() != this) throw UsageError(std::string(op) + ": operand from another graph");
      n.parents.push_back(p.id());
      n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw UsageError("backward: loss from another graph");
  if (value_of(loss.id()).size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " +
                     shape_string(value_of(loss.id()).shape()));
  }
  for (auto& n : nodes_) {
    if (!n.leaf) n.grad = Tensor();
  }
  if (!nodes_[loss.id()].requires_grad) return;
  Node& root = nodes_[loss.id()];
  if (root.leaf) {
    grad_slot(loss.id())[0] += 1.0;
    return;
  }
  root.grad = Tensor(value_of(loss.id()).shape(), 1.0);
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.leaf || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

// ----------------------------------------------------------------- kernels

namespace {

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

}  // namespace

// ---------------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw UsageError("matmul: shape mismatch " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  gemm_nn(m, n, k, av.data(), bv.data(), out.data());
  return g.record(std::move(out), {a, b}, [m, k, n](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.out_grad(self);
    const std::uint32_t ia = g.parent(self, 0), ib = g.parent(self, 1);
    if (g.requires_grad(ia)) {
      gemm_nt(m, k, n, dc.data(), g.value_of(ib).data(), g.grad_slot(ia).data());
    }
    if (g.requires_grad(ib)) {
      gemm_tn(k, n, m, g.value_of(ia).data(), dc.data(), g.grad_slot(ib).data());
    }
  }, "matmul");
}

Var add(Var a, Var b) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw UsageError("add: cannot broadcast " + shape_string(bv.shape()) + " onto " +
                     shape_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t inner = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  return g.record(std::move(out), {a, b}, [inner](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.out_grad(self);
    const std::uint32_t ia = g.parent(self, 0), ib = g.parent(self, 1);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_slot(ia);
      for (std::size_t i = 0; i < dc.size(); ++i) ga[i] += dc[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_slot(ib);
      for (std::size_t i = 0; i < dc.size(); ++i) gb[i % inner] += dc[i];
    }
  }, "add");
}

Var mul(Var a, Var b) {
  Graph& g = *a.graph();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw UsageError("mul: shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a, b}, [](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.out_grad(self);
    const std::uint32_t ia = g.parent(self, 0), ib = g.parent(self, 1);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_slot(ia);
      const Tensor& bv = g.value_of(ib);
      for (std::size_t i = 0; i < dc.size(); ++i) ga[i] += dc[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_slot(ib);
      const Tensor& av = g.value_of(ia);
      for (std::size_t i = 0; i < dc.size(); ++i) gb[i] += dc[i] * av[i];
    }
  }, "mul");
}

Var scale(Var a, double factor) {
  Graph& g = *a.graph();
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return g.record(std::move(out), {a}, [factor](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.out_grad(self);
    Tensor& ga = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < dc.size(); ++i) ga[i] += dc[i] * factor;
  }, "scale");
}

Var sum(Var a) {
  Graph& g = *a.graph();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return g.record(Tensor::scalar(s), {a}, [](Graph& g, std::uint32_t self) {
    const double d = g.out_grad(self)[0];
    Tensor& ga = g.grad_slot(g.parent(self, 0));
    for (double& v : ga.values()) v += d;
  }, "sum");
}

Var embedding(Var table, std::span<const std::int32_t> ids) {
  Graph& g = *table.graph();
  const Tensor& tv = table.value();
  require_rank(tv, 2, "embedding");
  const std::size_t rows = tv.dim(0), d = tv.dim(1);
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw UsageError("embedding: id " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  return g.record(std::move(out), {table}, [idx = std::move(idx), d](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.out_grad(self);
    Tensor& gt = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* row = gt.data() + static_cast<std::size_t>(idx[i]) * d;
      const double* src = dc.data() + i * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += src[k];
    }
  }, "embedding");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw UsageError("layer_norm: gain/bias shapes " + shape_string(gain.value().shape()) + ", " +
                     shape_string(bias.value().shape()) + " do not match last axis of " +
                     shape_string(xv.shape()));
  }
  const std::size_t rows = xv.rows();
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += xr[k];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t k = 0; k < d; ++k) var += (xr[k] - mean) * (xr[k] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < d; ++k) {
      const double h = (xr[k] - mean) * rstd[r];
      xhat[r * d + k] = h;
      out[r * d + k] = h * gv[k] + bv[k];
    }
  }
  return g.record(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), rstd = std::move(rstd), d, rows](Graph& g, std::uint32_t self) {
        const Tensor& dy = g.out_grad(self);
        const std::uint32_t ix = g.parent(self, 0), ig = g.parent(self, 1), ib = g.parent(self, 2);
        const Tensor& gv = g.value_of(ig);
        if (g.requires_grad(ig)) {
          Tensor& gg = g.grad_slot(ig);
          for (std::size_t i = 0; i < dy.size(); ++i) gg[i % d] += dy[i] * xhat[i];
        }
        if (g.requires_grad(ib)) {
          Tensor& gb = g.grad_slot(ib);
          for (std::size_t i = 0; i < dy.size(); ++i) gb[i % d] += dy[i];
        }
        if (g.requires_grad(ix)) {
          Tensor& gx = g.grad_slot(ix);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = dy[r * d + k] * gv[k];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + k];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = dy[r * d + k] * gv[k];
              gx[r * d + k] += rstd[r] * (dh - mean_dh - xhat[r * d + k] * mean_dh_h);
            }
          }
        }
      },
      "layer_norm");
}

Var softmax(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols(), rows = xv.rows();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double* yr = out.data() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      yr[k] = std::exp(xr[k] - mx);
      total += yr[k];
    }
    for (std::size_t k = 0; k < d; ++k) yr[k] /= total;
  }
  return g.record(std::move(out), {x}, [d, rows](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    const Tensor& y = g.value_of(self);
    Tensor& gx = g.grad_slot(g.parent(self, 0));
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += dy[r * d + k] * y[r * d + k];
      for (std::size_t k = 0; k < d; ++k) gx[r * d + k] += y[r * d + k] * (dy[r * d + k] - dot);
    }
  }, "softmax");
}

Var gelu(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return g.record(std::move(out), {x}, [](Graph& g, std::uint32_t self) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const Tensor& dy = g.out_grad(self);
    const std::uint32_t ix = g.parent(self, 0);
    const Tensor& xv = g.value_of(ix);
    Tensor& gx = g.grad_slot(ix);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += dy[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

Var dropout(Var x, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: p must lie in [0, 1)");
  if (p == 0.0) return x;
  Graph& g = *x.graph();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double f = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(rng) ? f : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return g.record(std::move(out), {x}, [mask = std::move(mask)](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& gx = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i] * mask[i];
  }, "dropout");
}

Var reshape(Var x, Shape shape) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  out.reshape(std::move(shape));
  return g.record(std::move(out), {x}, [](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& gx = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i];
  }, "reshape");
}

Var transpose(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  require_rank(xv, 2, "transpose");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  return g.record(std::move(out), {x}, [r, c](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& gx = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += dy[j * r + i];
    }
  }, "transpose");
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_cols");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (begin + count > c) {
    throw UsageError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_string(xv.shape()));
  }
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(xv.data() + i * c + begin, count, out.data() + i * count);
  }
  return g.record(std::move(out), {x}, [r, c, begin, count](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& gx = g.grad_slot(g.parent(self, 0));
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < count; ++j) gx[i * c + begin + j] += dy[i * count + j];
    }
  }, "slice_cols");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  Graph& g = *parts.front().graph();
  const std::size_t r = parts.front().value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != r) {
      throw UsageError("concat_cols: row mismatch " + shape_string(parts.front().value().shape()) +
                       " vs " + shape_string(p.value().shape()));
    }
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * total + off);
    }
    off += widths[k];
  }
  return g.record(std::move(out), parts, [widths, r, total](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.out_grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::uint32_t ip = g.parent(self, k);
      if (g.requires_grad(ip)) {
        Tensor& gp = g.grad_slot(ip);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += dy[i * total + off + j];
        }
      }
      off += widths[k];
    }
  }, "concat_cols");
}

Var cross_entropy(Var logits, std::size_t index) {
  Graph& g = *logits.graph();
  const Tensor& lv = logits.value();
  if (index >= lv.size()) {
    throw UsageError("cross_entropy: index " + std::to_string(index) + " outside logits of shape " +
                     shape_string(lv.shape()));
  }
  const double mx = *std::max_element(lv.values().begin(), lv.values().end());
  std::vector<double> probs(lv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    probs[i] = std::exp(lv[i] - mx);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  const double loss = std::log(total) + mx - lv[index];
  return g.record(Tensor::scalar(std::max(loss, 0.0)), {logits},
                  [probs = std::move(probs), index](Graph& g, std::uint32_t self) {
                    const double d = g.out_grad(self)[0];
                    Tensor& gl = g.grad_slot(g.parent(self, 0));
                    for (std::size_t i = 0; i < probs.size(); ++i) {
                      gl[i] += d * (probs[i] - (i == index ? 1.0 : 0.0));
                    }
                  },
                  "cross_entropy");
}

}  // namespace coqac::nn
