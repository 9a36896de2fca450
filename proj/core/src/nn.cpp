#include "cvheat/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cvheat/graph.hpp"

namespace cvheat::nn {

Parameter& ParamStore::add(const std::string& name, Tensor init, bool weight_decay) {
  if (find(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor::zeros(init.shape);
  p.adam_m = Tensor::zeros(init.shape);
  p.adam_v = Tensor::zeros(init.shape);
  p.value = std::move(init);
  p.weight_decay = weight_decay;
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

Tensor init_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = dist(rng);
  return t;
}

LinearLayer LinearLayer::make(ParamStore& ps, const std::string& name, int in, int out,
                              std::mt19937_64& rng) {
  LinearLayer l;
  l.w = &ps.add(name + ".w", init_uniform({out, in}, in, rng));
  l.b = &ps.add(name + ".b", init_uniform({out}, in, rng), false);
  return l;
}

LinearLayer LinearLayer::identity(ParamStore& ps, const std::string& name, int dim) {
  Tensor w({dim, dim});
  for (int i = 0; i < dim; ++i) w.at2(i, i) = 1.0;
  LinearLayer l;
  l.w = &ps.add(name + ".w", std::move(w));
  l.b = &ps.add(name + ".b", Tensor::zeros({dim}), false);
  return l;
}

Var LinearLayer::forward(Graph& g, Var x) const {
  if (g.value(x).ndim() != 2 || g.value(x).shape[1] != in_dim())
    throw std::invalid_argument("LinearLayer: input width " + g.value(x).shape_str() +
                                " does not match in_dim " + std::to_string(in_dim()));
  return g.add_rowvec(g.matmul_nt(x, g.param(*w)), g.param(*b));
}

DepthwiseConv DepthwiseConv::make(ParamStore& ps, const std::string& name, int channels, int k,
                                  std::mt19937_64& rng) {
  if (k % 2 == 0) throw std::invalid_argument("DepthwiseConv: kernel must be odd");
  DepthwiseConv l;
  l.w = &ps.add(name + ".w", init_uniform({channels, k, k}, k * k, rng));
  l.b = &ps.add(name + ".b", init_uniform({channels}, k * k, rng), false);
  return l;
}

Var DepthwiseConv::forward(Graph& g, Var x) const {
  return g.dwconv(x, g.param(*w), g.param(*b));
}

Conv2d Conv2d::make(ParamStore& ps, const std::string& name, int in, int out, int k, int stride,
                    std::mt19937_64& rng) {
  Conv2d l;
  l.w = &ps.add(name + ".w", init_uniform({out, in, k, k}, in * k * k, rng));
  l.b = &ps.add(name + ".b", init_uniform({out}, in * k * k, rng), false);
  l.stride = stride;
  return l;
}

Var Conv2d::forward(Graph& g, Var x) const {
  return g.conv2d(x, g.param(*w), g.param(*b), stride);
}

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& name, int channels) {
  LayerNorm l;
  l.gamma = &ps.add(name + ".gamma", Tensor::full({channels}, 1.0), false);
  l.beta = &ps.add(name + ".beta", Tensor::zeros({channels}), false);
  return l;
}

Var LayerNorm::forward(Graph& g, Var x) const {
  return g.layernorm_ch(x, g.param(*gamma), g.param(*beta));
}

GcnLayer GcnLayer::make(ParamStore& ps, const std::string& name, int in, int out,
                        std::mt19937_64& rng) {
  GcnLayer l;
  l.w = &ps.add(name + ".w", init_uniform({out, in}, in, rng));
  return l;
}

Tensor mean_aggregation_matrix(const cvheat::graph::SpatialGraph& g, bool self_loop) {
  const int n = g.node_count();
  Tensor a({n, n});
  if (n == 0) return a;
  std::vector<int> deg(n, self_loop ? 1 : 0);
  for (auto [i, j] : g.edges) {
    ++deg[i];
    ++deg[j];
  }
  if (self_loop)
    for (int i = 0; i < n; ++i) a.at2(i, i) = 1.0 / deg[i];
  for (auto [i, j] : g.edges) {
    a.at2(i, j) = 1.0 / deg[i];
    a.at2(j, i) = 1.0 / deg[j];
  }
  return a;
}

Var GcnLayer::forward(Graph& g, Var feats, const cvheat::graph::SpatialGraph& g_struct) const {
  const Tensor& fv = g.value(feats);
  if (fv.ndim() != 2 || fv.shape[1] != w->value.shape[1])
    throw std::invalid_argument("GcnLayer: feature width mismatch");
  if (fv.shape[0] != g_struct.node_count())
    throw std::invalid_argument("GcnLayer: node count mismatch");
  Var agg = g.matmul(g.constant(mean_aggregation_matrix(g_struct, self_loop)), feats);
  return g.relu(g.matmul_nt(agg, g.param(*w)));
}

// ----------------------------------------------------------- gradient checks

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " max_rel_err=" << max_rel_err << " at index "
     << worst_index << " (analytic=" << worst_analytic << " numeric=" << worst_numeric
     << ", checked " << checked << " entries)";
  return os.str();
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double eps, double tol) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
  constexpr double kAbsFallback = 1e-6;

  Graph g;
  Var leaf = g.leaf(x);
  Var out = f(g, leaf);
  if (g.value(out).size() != 1) throw std::invalid_argument("grad_check: f must be scalar");
  if (!g.value(out).all_finite()) throw std::runtime_error("grad_check: non-finite f value");
  g.backward(out);
  const Tensor analytic = g.grad(leaf);

  auto eval = [&](const Tensor& xp) {
    Graph h;
    Var v = f(h, h.leaf(xp));
    const double y = h.value(v).data[0];
    if (!std::isfinite(y)) throw std::runtime_error("grad_check: non-finite f value");
    return y;
  };

  GradCheckReport rep;
  rep.passed = true;
  Tensor xp = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double orig = xp.data[i];
    xp.data[i] = orig + eps;
    const double fp = eval(xp);
    xp.data[i] = orig - eps;
    const double fm = eval(xp);
    xp.data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double denom = std::max(std::fabs(a), std::fabs(numeric));
    const double rel = denom > 0.0 ? std::fabs(a - numeric) / denom : 0.0;
    const bool ok = rel < tol || std::fabs(a - numeric) < kAbsFallback;
    ++rep.checked;
    if (rel > rep.max_rel_err && !(std::fabs(a - numeric) < kAbsFallback)) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
      rep.worst_analytic = a;
      rep.worst_numeric = numeric;
    }
    if (!ok) rep.passed = false;
  }
  return rep;
}

}  // namespace cvheat::nn
