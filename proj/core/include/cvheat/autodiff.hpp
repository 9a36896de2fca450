#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "cvheat/tensor.hpp"

namespace cvheat::nn {

struct Parameter;
class Graph;

// Handle into a Graph's tape. Cheap to copy; valid only for the Graph that
// created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over a fixed operator set. One Graph instance records one
// forward pass; backward() walks the tape once. Parameters are external
// objects; param() leafs them in and backward() accumulates into their grad.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ----- leaves -----
  Var constant(Tensor t);           // no gradient tracking
  Var leaf(Tensor t);               // gradient-tracked input
  Var param(Parameter& p);          // gradient-tracked, flushed to p.grad

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const;  // valid after backward()

  // ----- elementwise -----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);
  Var vdiv(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var vexp(Var a);
  Var vlog(Var a);
  Var relu(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);
  Var vabs(Var a);
  Var vpow(Var a, double p);        // requires positive entries
  Var vmin(Var a, Var b);
  Var vmax(Var a, Var b);
  Var clamp(Var a, double lo, double hi);

  // ----- linear algebra -----
  Var matmul(Var a, Var b);         // (n,k)·(k,m)
  Var matmul_nt(Var a, Var b);      // (n,k)·(m,k)^T -> (n,m)
  Var add_rowvec(Var x, Var b);     // (n,d) + (d,) per row

  // ----- shape -----
  Var reshape(Var a, std::vector<int> shape);
  Var chw_to_tokens(Var a);         // (C,H,W) -> (H*W, C)
  Var tokens_to_chw(Var a, int h, int w);  // (H*W, C) -> (C,H,W)
  Var concat_ch(Var a, Var b);      // (C1,H,W) ++ (C2,H,W) -> (C1+C2,H,W)
  Var gather(Var a, std::vector<std::int64_t> flat_idx);   // -> (n,)
  Var gather_rows(Var a, std::vector<int> rows);           // (n,d) -> (m,d)
  Var broadcast_hw(Var k, int channels);                   // (H,W) -> (C,H,W)
  Var broadcast_to(Var s, std::vector<int> shape);         // (1,) -> shape

  // ----- reductions -----
  Var sum(Var a);                   // -> (1,)
  Var mean_all(Var a);              // -> (1,)
  Var mean_rows(Var a);             // (n,d) -> (d,)

  // ----- structured ops -----
  Var conv2d(Var x, Var w, Var b, int stride);   // x(C,H,W) w(O,C,k,k) b(O)
  Var dwconv(Var x, Var w, Var b);               // x(C,H,W) w(C,k,k) b(C), same pad
  Var dct2(Var x);                               // (H,W) or (C,H,W), orthonormal
  Var idct2(Var x);
  Var layernorm_ch(Var x, Var gamma, Var beta, double eps = 1e-5);  // over C
  // Scatter node rows onto a (d,H,W) grid; cells[i] = row*W+col or -1 to drop.
  // Colliding rows are averaged.
  Var scatter_mean(Var nodes, const std::vector<int>& cells, int h, int w);

  void backward(Var scalar);
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* bound = nullptr;
    std::function<void(Graph&, const Node&)> backprop;
  };

  Var push(Tensor value, bool requires_grad,
           std::function<void(Graph&, const Node&)> backprop = nullptr);
  Tensor& grad_buf(int id);
  bool track(Var v) const { return nodes_[v.id].requires_grad; }

  Var unary(Var a, Tensor out, std::function<double(double, double)> dval_to_da);
  // deque keeps node references stable while later ops extend the tape
  std::deque<Node> nodes_;

  friend struct GraphTestPeer;
};

}  // namespace cvheat::nn
