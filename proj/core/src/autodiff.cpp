#include "cvheat/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "cvheat/dct.hpp"
#include "cvheat/nn.hpp"

namespace cvheat::nn {

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(std::string("autodiff: ") + msg);
}

// out(n,m) += a(n,k) * b(k,m)
void gemm_acc(const double* a, const double* b, double* out, int n, int k, int m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(n) * k * m > 65536)
#endif
  for (int i = 0; i < n; ++i) {
    double* oi = out + static_cast<std::size_t>(i) * m;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
    }
  }
}

// out(n,m) += a(n,k) * b(m,k)^T
void gemm_nt_acc(const double* a, const double* b, double* out, int n, int k, int m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(n) * k * m > 65536)
#endif
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* oi = out + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      oi[j] += s;
    }
  }
}

// out(k,m) += a(n,k)^T * b(n,m)
void gemm_tn_acc(const double* a, const double* b, double* out, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* op = out + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) op[j] += av * bi[j];
    }
  }
}

}  // namespace

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.data.empty()) throw std::runtime_error("autodiff: grad unavailable (run backward first)");
  return n.grad;
}

Var Graph::push(Tensor value, bool requires_grad,
                std::function<void(Graph&, const Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

Var Graph::constant(Tensor t) { return push(std::move(t), false); }

Var Graph::leaf(Tensor t) { return push(std::move(t), true); }

Var Graph::param(Parameter& p) {
  Var v = push(p.value, true);
  nodes_[v.id].bound = &p;
  return v;
}

void Graph::backward(Var scalar) {
  check(nodes_[scalar.id].value.size() == 1, "backward target must be scalar");
  grad_buf(scalar.id).data[0] = 1.0;
  for (int id = scalar.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.backprop) n.backprop(*this, n);
    if (n.bound) {
      for (std::int64_t i = 0; i < n.grad.size(); ++i) n.bound->grad.data[i] += n.grad.data[i];
    }
  }
}

// ---------------------------------------------------------------- elementwise

Var Graph::add(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "add: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    if (g.track(a)) {
      Tensor& ga = g.grad_buf(a.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) gb.data[i] += n.grad.data[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "sub: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    if (g.track(a)) {
      Tensor& ga = g.grad_buf(a.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) gb.data[i] -= n.grad.data[i];
    }
  });
}

Var Graph::neg(Var a) { return scale(a, -1.0); }

Var Graph::mul(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "mul: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    const Tensor& av = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    if (g.track(a)) {
      Tensor& ga = g.grad_buf(a.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i] * bv2.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) gb.data[i] += n.grad.data[i] * av.data[i];
    }
  });
}

Var Graph::vdiv(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "vdiv: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] /= bv.data[i];
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    const Tensor& av = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    if (g.track(a)) {
      Tensor& ga = g.grad_buf(a.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i] / bv2.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (std::int64_t i = 0; i < n.grad.size(); ++i)
        gb.data[i] -= n.grad.data[i] * av.data[i] / (bv2.data[i] * bv2.data[i]);
    }
  });
}

Var Graph::scale(Var a, double s) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v *= s;
  return push(std::move(out), track(a), [a, s](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += s * n.grad.data[i];
  });
}

Var Graph::add_const(Var a, double c) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v += c;
  return push(std::move(out), track(a), [a](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i];
  });
}

// Generic unary op: dval_to_da(x, y) returns dy/dx given input x and output y.
Var Graph::unary(Var a, Tensor out, std::function<double(double, double)> d) {
  return push(std::move(out), track(a), [a, d](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    const Tensor& av = g.nodes_[a.id].value;
    Tensor& ga = g.grad_buf(a.id);
    for (std::int64_t i = 0; i < n.grad.size(); ++i)
      ga.data[i] += n.grad.data[i] * d(av.data[i], n.value.data[i]);
  });
}

Var Graph::vexp(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = std::exp(v);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var Graph::vlog(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = std::log(v);
  return unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var Graph::relu(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Graph::softplus(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) {
    // numerically stable log(1+e^x)
    v = v > 30.0 ? v : std::log1p(std::exp(v));
  }
  return unary(a, std::move(out), [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var Graph::sigmoid(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return unary(a, std::move(out), [](double, double y) { return y * (1.0 - y); });
}

Var Graph::vabs(Var a) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = std::fabs(v);
  return unary(a, std::move(out),
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Graph::vpow(Var a, double p) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = std::pow(v, p);
  return unary(a, std::move(out), [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Var Graph::vmin(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "vmin: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] = std::min(out.data[i], bv.data[i]);
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    const Tensor& av = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      // ties route to the first argument
      if (av.data[i] <= bv2.data[i]) {
        if (g.track(a)) g.grad_buf(a.id).data[i] += n.grad.data[i];
      } else if (g.track(b)) {
        g.grad_buf(b.id).data[i] += n.grad.data[i];
      }
    }
  });
}

Var Graph::vmax(Var a, Var b) {
  check(nodes_[a.id].value.same_shape(nodes_[b.id].value), "vmax: shape mismatch");
  Tensor out = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] = std::max(out.data[i], bv.data[i]);
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b](Graph& g, const Node& n) {
    const Tensor& av = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      if (av.data[i] >= bv2.data[i]) {
        if (g.track(a)) g.grad_buf(a.id).data[i] += n.grad.data[i];
      } else if (g.track(b)) {
        g.grad_buf(b.id).data[i] += n.grad.data[i];
      }
    }
  });
}

Var Graph::clamp(Var a, double lo, double hi) {
  Tensor out = nodes_[a.id].value;
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  return unary(a, std::move(out),
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ------------------------------------------------------------- linear algebra

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(av.ndim() == 2 && bv.ndim() == 2 && av.shape[1] == bv.shape[0], "matmul: shape mismatch");
  const int n = av.shape[0], k = av.shape[1], m = bv.shape[1];
  Tensor out({n, m});
  gemm_acc(av.data.data(), bv.data.data(), out.data.data(), n, k, m);
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b, n, k, m](Graph& g, const Node& nd) {
    const Tensor& av2 = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    if (g.track(a))  // dA = G * B^T
      gemm_nt_acc(nd.grad.data.data(), bv2.data.data(), g.grad_buf(a.id).data.data(), n, m, k);
    if (g.track(b))  // dB = A^T * G
      gemm_tn_acc(av2.data.data(), nd.grad.data.data(), g.grad_buf(b.id).data.data(), n, k, m);
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& av = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(av.ndim() == 2 && bv.ndim() == 2 && av.shape[1] == bv.shape[1],
        "matmul_nt: shape mismatch");
  const int n = av.shape[0], k = av.shape[1], m = bv.shape[0];
  Tensor out({n, m});
  gemm_nt_acc(av.data.data(), bv.data.data(), out.data.data(), n, k, m);
  bool rg = track(a) || track(b);
  return push(std::move(out), rg, [a, b, n, k, m](Graph& g, const Node& nd) {
    const Tensor& av2 = g.nodes_[a.id].value;
    const Tensor& bv2 = g.nodes_[b.id].value;
    if (g.track(a))  // dA = G * B
      gemm_acc(nd.grad.data.data(), bv2.data.data(), g.grad_buf(a.id).data.data(), n, m, k);
    if (g.track(b))  // dB = G^T * A
      gemm_tn_acc(nd.grad.data.data(), av2.data.data(), g.grad_buf(b.id).data.data(), n, m, k);
  });
}

Var Graph::add_rowvec(Var x, Var b) {
  const Tensor& xv = nodes_[x.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(xv.ndim() == 2 && bv.ndim() == 1 && xv.shape[1] == bv.shape[0],
        "add_rowvec: shape mismatch");
  Tensor out = xv;
  const int n = xv.shape[0], d = xv.shape[1];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at2(i, j) += bv.data[j];
  bool rg = track(x) || track(b);
  return push(std::move(out), rg, [x, b, n, d](Graph& g, const Node& nd) {
    if (g.track(x)) {
      Tensor& gx = g.grad_buf(x.id);
      for (std::int64_t i = 0; i < nd.grad.size(); ++i) gx.data[i] += nd.grad.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gb.data[j] += nd.grad.at2(i, j);
    }
  });
}

// --------------------------------------------------------------------- shape

Var Graph::reshape(Var a, std::vector<int> shape) {
  check(Tensor::numel(shape) == nodes_[a.id].value.size(), "reshape: element count mismatch");
  Tensor out(std::move(shape), nodes_[a.id].value.data);
  return push(std::move(out), track(a), [a](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i];
  });
}

Var Graph::chw_to_tokens(Var a) {
  const Tensor& av = nodes_[a.id].value;
  check(av.ndim() == 3, "chw_to_tokens: rank-3 input required");
  const int c = av.shape[0], h = av.shape[1], w = av.shape[2];
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({h * w, c});
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t p = 0; p < hw; ++p) out.data[p * c + ch] = av.data[ch * hw + p];
  return push(std::move(out), track(a), [a, c, hw](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p) ga.data[ch * hw + p] += n.grad.data[p * c + ch];
  });
}

Var Graph::tokens_to_chw(Var a, int h, int w) {
  const Tensor& av = nodes_[a.id].value;
  check(av.ndim() == 2 && av.shape[0] == h * w, "tokens_to_chw: token count mismatch");
  const int c = av.shape[1];
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t p = 0; p < hw; ++p) out.data[ch * hw + p] = av.data[p * c + ch];
  return push(std::move(out), track(a), [a, c, hw](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p) ga.data[p * c + ch] += n.grad.data[ch * hw + p];
  });
}

Var Graph::concat_ch(Var a, Var b) {
  const Tensor& av = nodes_[a.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(av.ndim() == 3 && bv.ndim() == 3 && av.shape[1] == bv.shape[1] &&
            av.shape[2] == bv.shape[2],
        "concat_ch: spatial mismatch");
  Tensor out({av.shape[0] + bv.shape[0], av.shape[1], av.shape[2]});
  std::memcpy(out.data.data(), av.data.data(), av.data.size() * sizeof(double));
  std::memcpy(out.data.data() + av.size(), bv.data.data(), bv.data.size() * sizeof(double));
  bool rg = track(a) || track(b);
  const std::int64_t na = av.size();
  return push(std::move(out), rg, [a, b, na](Graph& g, const Node& n) {
    if (g.track(a)) {
      Tensor& ga = g.grad_buf(a.id);
      for (std::int64_t i = 0; i < na; ++i) ga.data[i] += n.grad.data[i];
    }
    if (g.track(b)) {
      Tensor& gb = g.grad_buf(b.id);
      for (std::int64_t i = 0; i < gb.size(); ++i) gb.data[i] += n.grad.data[na + i];
    }
  });
}

Var Graph::gather(Var a, std::vector<std::int64_t> flat_idx) {
  const Tensor& av = nodes_[a.id].value;
  Tensor out({static_cast<int>(flat_idx.size())});
  for (std::size_t i = 0; i < flat_idx.size(); ++i) {
    check(flat_idx[i] >= 0 && flat_idx[i] < av.size(), "gather: index out of range");
    out.data[i] = av.data[flat_idx[i]];
  }
  return push(std::move(out), track(a), [a, idx = std::move(flat_idx)](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.data[idx[i]] += n.grad.data[i];
  });
}

Var Graph::gather_rows(Var a, std::vector<int> rows) {
  const Tensor& av = nodes_[a.id].value;
  check(av.ndim() == 2, "gather_rows: rank-2 input required");
  const int d = av.shape[1];
  Tensor out({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < av.shape[0], "gather_rows: row out of range");
    std::memcpy(out.data.data() + i * d, av.data.data() + static_cast<std::size_t>(rows[i]) * d,
                d * sizeof(double));
  }
  return push(std::move(out), track(a), [a, rs = std::move(rows), d](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (int j = 0; j < d; ++j) ga.data[static_cast<std::size_t>(rs[i]) * d + j] += n.grad.data[i * d + j];
  });
}

Var Graph::broadcast_hw(Var k, int channels) {
  const Tensor& kv = nodes_[k.id].value;
  check(kv.ndim() == 2, "broadcast_hw: rank-2 input required");
  const int h = kv.shape[0], w = kv.shape[1];
  Tensor out({channels, h, w});
  for (int c = 0; c < channels; ++c)
    std::memcpy(out.data.data() + static_cast<std::size_t>(c) * h * w, kv.data.data(),
                static_cast<std::size_t>(h) * w * sizeof(double));
  return push(std::move(out), track(k), [k, channels, h, w](Graph& g, const Node& n) {
    if (!g.track(k)) return;
    Tensor& gk = g.grad_buf(k.id);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int c = 0; c < channels; ++c)
      for (std::int64_t i = 0; i < hw; ++i) gk.data[i] += n.grad.data[c * hw + i];
  });
}

Var Graph::broadcast_to(Var s, std::vector<int> shape) {
  check(nodes_[s.id].value.size() == 1, "broadcast_to: scalar input required");
  Tensor out = Tensor::full(shape, nodes_[s.id].value.data[0]);
  return push(std::move(out), track(s), [s](Graph& g, const Node& n) {
    if (!g.track(s)) return;
    double acc = 0.0;
    for (double v : n.grad.data) acc += v;
    g.grad_buf(s.id).data[0] += acc;
  });
}

// ---------------------------------------------------------------- reductions

Var Graph::sum(Var a) {
  Tensor out = Tensor::scalar(nodes_[a.id].value.sum());
  return push(std::move(out), track(a), [a](Graph& g, const Node& n) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    const double gv = n.grad.data[0];
    for (double& v : ga.data) v += gv;
  });
}

Var Graph::mean_all(Var a) {
  const std::int64_t n = nodes_[a.id].value.size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Graph::mean_rows(Var a) {
  const Tensor& av = nodes_[a.id].value;
  check(av.ndim() == 2, "mean_rows: rank-2 input required");
  const int n = av.shape[0], d = av.shape[1];
  Tensor out({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.data[j] += av.at2(i, j);
  for (double& v : out.data) v /= n;
  return push(std::move(out), track(a), [a, n, d](Graph& g, const Node& nd) {
    if (!g.track(a)) return;
    Tensor& ga = g.grad_buf(a.id);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) ga.at2(i, j) += nd.grad.data[j] / n;
  });
}

// ------------------------------------------------------------ structured ops

Var Graph::conv2d(Var x, Var w, Var b, int stride) {
  const Tensor& xv = nodes_[x.id].value;
  const Tensor& wv = nodes_[w.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(xv.ndim() == 3 && wv.ndim() == 4, "conv2d: rank mismatch");
  check(wv.shape[1] == xv.shape[0], "conv2d: channel mismatch");
  check(wv.shape[2] == wv.shape[3] && wv.shape[2] % 2 == 1, "conv2d: odd square kernel required");
  check(stride >= 1, "conv2d: stride >= 1");
  const int ic = xv.shape[0], h = xv.shape[1], ww = xv.shape[2];
  const int oc = wv.shape[0], k = wv.shape[2], pad = k / 2;
  check(bv.ndim() == 1 && bv.shape[0] == oc, "conv2d: bias mismatch");
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (ww + 2 * pad - k) / stride + 1;
  Tensor out({oc, oh, ow});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int o = 0; o < oc; ++o) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double s = bv.data[o];
        const int i0 = i * stride - pad, j0 = j * stride - pad;
        for (int c = 0; c < ic; ++c) {
          for (int ki = 0; ki < k; ++ki) {
            const int yi = i0 + ki;
            if (yi < 0 || yi >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int xj = j0 + kj;
              if (xj < 0 || xj >= ww) continue;
              s += xv.at3(c, yi, xj) * wv.data[((static_cast<std::size_t>(o) * ic + c) * k + ki) * k + kj];
            }
          }
        }
        out.at3(o, i, j) = s;
      }
    }
  }
  bool rg = track(x) || track(w) || track(b);
  return push(std::move(out), rg,
              [x, w, b, stride, ic, h, ww, oc, k, pad, oh, ow](Graph& g, const Node& n) {
    const Tensor& xv2 = g.nodes_[x.id].value;
    const Tensor& wv2 = g.nodes_[w.id].value;
    const bool tx = g.track(x), tw = g.track(w), tb = g.track(b);
    Tensor* gx = tx ? &g.grad_buf(x.id) : nullptr;
    Tensor* gw = tw ? &g.grad_buf(w.id) : nullptr;
    Tensor* gb = tb ? &g.grad_buf(b.id) : nullptr;
    for (int o = 0; o < oc; ++o) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          const double gv = n.grad.at3(o, i, j);
          if (gv == 0.0) continue;
          if (tb) gb->data[o] += gv;
          const int i0 = i * stride - pad, j0 = j * stride - pad;
          for (int c = 0; c < ic; ++c) {
            for (int ki = 0; ki < k; ++ki) {
              const int yi = i0 + ki;
              if (yi < 0 || yi >= h) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int xj = j0 + kj;
                if (xj < 0 || xj >= ww) continue;
                const std::size_t widx = ((static_cast<std::size_t>(o) * ic + c) * k + ki) * k + kj;
                if (tx) gx->at3(c, yi, xj) += gv * wv2.data[widx];
                if (tw) gw->data[widx] += gv * xv2.at3(c, yi, xj);
              }
            }
          }
        }
      }
    }
  });
}

Var Graph::dwconv(Var x, Var w, Var b) {
  const Tensor& xv = nodes_[x.id].value;
  const Tensor& wv = nodes_[w.id].value;
  const Tensor& bv = nodes_[b.id].value;
  check(xv.ndim() == 3 && wv.ndim() == 3, "dwconv: rank mismatch");
  check(wv.shape[0] == xv.shape[0], "dwconv: channel mismatch");
  check(wv.shape[1] == wv.shape[2] && wv.shape[1] % 2 == 1, "dwconv: odd square kernel required");
  check(bv.ndim() == 1 && bv.shape[0] == xv.shape[0], "dwconv: bias mismatch");
  const int cch = xv.shape[0], h = xv.shape[1], ww = xv.shape[2];
  const int k = wv.shape[1], pad = k / 2;
  Tensor out({cch, h, ww});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int c = 0; c < cch; ++c) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < ww; ++j) {
        double s = bv.data[c];
        for (int ki = 0; ki < k; ++ki) {
          const int yi = i + ki - pad;
          if (yi < 0 || yi >= h) continue;
          for (int kj = 0; kj < k; ++kj) {
            const int xj = j + kj - pad;
            if (xj < 0 || xj >= ww) continue;
            s += xv.at3(c, yi, xj) * wv.at3(c, ki, kj);
          }
        }
        out.at3(c, i, j) = s;
      }
    }
  }
  bool rg = track(x) || track(w) || track(b);
  return push(std::move(out), rg, [x, w, b, cch, h, ww, k, pad](Graph& g, const Node& n) {
    const Tensor& xv2 = g.nodes_[x.id].value;
    const Tensor& wv2 = g.nodes_[w.id].value;
    const bool tx = g.track(x), tw = g.track(w), tb = g.track(b);
    Tensor* gx = tx ? &g.grad_buf(x.id) : nullptr;
    Tensor* gw = tw ? &g.grad_buf(w.id) : nullptr;
    Tensor* gb = tb ? &g.grad_buf(b.id) : nullptr;
    for (int c = 0; c < cch; ++c) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < ww; ++j) {
          const double gv = n.grad.at3(c, i, j);
          if (gv == 0.0) continue;
          if (tb) gb->data[c] += gv;
          for (int ki = 0; ki < k; ++ki) {
            const int yi = i + ki - pad;
            if (yi < 0 || yi >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int xj = j + kj - pad;
              if (xj < 0 || xj >= ww) continue;
              if (tx) gx->at3(c, yi, xj) += gv * wv2.at3(c, ki, kj);
              if (tw) gw->at3(c, ki, kj) += gv * xv2.at3(c, yi, xj);
            }
          }
        }
      }
    }
  });
}

namespace {

// Applies y = D x D^T per channel (forward basis) or transposed (inverse).
Tensor dct_apply(const Tensor& x, bool inverse) {
  const bool chw = x.ndim() == 3;
  const int c = chw ? x.shape[0] : 1;
  const int h = chw ? x.shape[1] : x.shape[0];
  const int w = chw ? x.shape[2] : x.shape[1];
  const Tensor& dh = heat::DctBasis::get(h).fwd;
  const Tensor& dw = heat::DctBasis::get(w).fwd;
  Tensor out(x.shape);
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data.data() + static_cast<std::size_t>(ch) * h * w;
    double* dst = out.data.data() + static_cast<std::size_t>(ch) * h * w;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    // rows: tmp = Dh * src  (or Dh^T * src)
    for (int i = 0; i < h; ++i) {
      for (int p = 0; p < h; ++p) {
        const double dv = inverse ? dh.at2(p, i) : dh.at2(i, p);
        if (dv == 0.0) continue;
        const double* sp = src + static_cast<std::size_t>(p) * w;
        double* ti = tmp.data() + static_cast<std::size_t>(i) * w;
        for (int j = 0; j < w; ++j) ti[j] += dv * sp[j];
      }
    }
    // cols: dst = tmp * Dw^T (or tmp * Dw)
    for (int i = 0; i < h; ++i) {
      const double* ti = tmp.data() + static_cast<std::size_t>(i) * w;
      double* di = dst + static_cast<std::size_t>(i) * w;
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int p = 0; p < w; ++p) s += ti[p] * (inverse ? dw.at2(p, j) : dw.at2(j, p));
        di[j] = s;
      }
    }
  }
  return out;
}

}  // namespace

Var Graph::dct2(Var x) {
  const Tensor& xv = nodes_[x.id].value;
  check(xv.ndim() == 2 || xv.ndim() == 3, "dct2: rank-2 or rank-3 input required");
  Tensor out = dct_apply(xv, false);
  // orthonormal transform: adjoint of DCT is IDCT of the cotangent
  return push(std::move(out), track(x), [x](Graph& g, const Node& n) {
    if (!g.track(x)) return;
    Tensor gx = dct_apply(n.grad, true);
    Tensor& ga = g.grad_buf(x.id);
    for (std::int64_t i = 0; i < gx.size(); ++i) ga.data[i] += gx.data[i];
  });
}

Var Graph::idct2(Var x) {
  const Tensor& xv = nodes_[x.id].value;
  check(xv.ndim() == 2 || xv.ndim() == 3, "idct2: rank-2 or rank-3 input required");
  Tensor out = dct_apply(xv, true);
  return push(std::move(out), track(x), [x](Graph& g, const Node& n) {
    if (!g.track(x)) return;
    Tensor gx = dct_apply(n.grad, false);
    Tensor& ga = g.grad_buf(x.id);
    for (std::int64_t i = 0; i < gx.size(); ++i) ga.data[i] += gx.data[i];
  });
}

Var Graph::layernorm_ch(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = nodes_[x.id].value;
  const Tensor& gv = nodes_[gamma.id].value;
  const Tensor& bv = nodes_[beta.id].value;
  check(xv.ndim() == 3, "layernorm_ch: rank-3 input required");
  const int c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
  check(gv.ndim() == 1 && gv.shape[0] == c && bv.ndim() == 1 && bv.shape[0] == c,
        "layernorm_ch: affine shape mismatch");
  Tensor out(xv.shape);
  Tensor mu({h, w}), rstd({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double m = 0.0;
      for (int ch = 0; ch < c; ++ch) m += xv.at3(ch, i, j);
      m /= c;
      double var = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double d = xv.at3(ch, i, j) - m;
        var += d * d;
      }
      var /= c;
      const double rs = 1.0 / std::sqrt(var + eps);
      mu.at2(i, j) = m;
      rstd.at2(i, j) = rs;
      for (int ch = 0; ch < c; ++ch)
        out.at3(ch, i, j) = (xv.at3(ch, i, j) - m) * rs * gv.data[ch] + bv.data[ch];
    }
  }
  bool rg = track(x) || track(gamma) || track(beta);
  return push(std::move(out), rg,
              [x, gamma, beta, c, h, w, mu = std::move(mu), rstd = std::move(rstd)](
                  Graph& g, const Node& n) {
    const Tensor& xv2 = g.nodes_[x.id].value;
    const Tensor& gv2 = g.nodes_[gamma.id].value;
    const bool tx = g.track(x), tg = g.track(gamma), tb = g.track(beta);
    Tensor* gx = tx ? &g.grad_buf(x.id) : nullptr;
    Tensor* gg = tg ? &g.grad_buf(gamma.id) : nullptr;
    Tensor* gb = tb ? &g.grad_buf(beta.id) : nullptr;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double m = mu.at2(i, j), rs = rstd.at2(i, j);
        double sum_gh = 0.0, sum_ghx = 0.0;  // sums of gamma-weighted grads
        for (int ch = 0; ch < c; ++ch) {
          const double go = n.grad.at3(ch, i, j);
          const double xhat = (xv2.at3(ch, i, j) - m) * rs;
          if (tg) gg->data[ch] += go * xhat;
          if (tb) gb->data[ch] += go;
          const double gh = go * gv2.data[ch];
          sum_gh += gh;
          sum_ghx += gh * xhat;
        }
        if (tx) {
          for (int ch = 0; ch < c; ++ch) {
            const double gh = n.grad.at3(ch, i, j) * gv2.data[ch];
            const double xhat = (xv2.at3(ch, i, j) - m) * rs;
            gx->at3(ch, i, j) += rs * (gh - sum_gh / c - xhat * sum_ghx / c);
          }
        }
      }
    }
  });
}

Var Graph::scatter_mean(Var nodes, const std::vector<int>& cells, int h, int w) {
  const Tensor& nv = nodes_[nodes.id].value;
  check(nv.ndim() == 2, "scatter_mean: rank-2 node matrix required");
  const int n = nv.shape[0], d = nv.shape[1];
  check(static_cast<int>(cells.size()) == n, "scatter_mean: one cell per node required");
  std::vector<int> count(static_cast<std::size_t>(h) * w, 0);
  for (int i = 0; i < n; ++i) {
    if (cells[i] < 0) continue;
    check(cells[i] < h * w, "scatter_mean: cell out of range");
    ++count[cells[i]];
  }
  Tensor out({d, h, w});
  for (int i = 0; i < n; ++i) {
    if (cells[i] < 0) continue;
    const int cell = cells[i];
    for (int f = 0; f < d; ++f)
      out.data[static_cast<std::size_t>(f) * h * w + cell] += nv.at2(i, f) / count[cell];
  }
  return push(std::move(out), track(nodes),
              [nodes, cells, count = std::move(count), n, d, h, w](Graph& g, const Node& nd) {
    if (!g.track(nodes)) return;
    Tensor& gn = g.grad_buf(nodes.id);
    for (int i = 0; i < n; ++i) {
      if (cells[i] < 0) continue;
      const int cell = cells[i];
      for (int f = 0; f < d; ++f)
        gn.at2(i, f) += nd.grad.data[static_cast<std::size_t>(f) * h * w + cell] / count[cell];
    }
  });
}

}  // namespace cvheat::nn
