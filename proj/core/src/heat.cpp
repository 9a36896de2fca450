#include "cvheat/heat.hpp"

#include <cmath>
#include <stdexcept>

namespace cvheat::heat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

FrequencyGrid FrequencyGrid::make(int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("FrequencyGrid: dims must be >= 1");
  FrequencyGrid fg;
  fg.w2 = Tensor({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double wi = kPi * i / h;
      const double wj = kPi * j / w;
      fg.w2.at2(i, j) = wi * wi + wj * wj;
    }
  return fg;
}

namespace {

void check_kt(double k, double t) {
  if (k < 0.0) throw std::invalid_argument("hco_apply: k must be non-negative");
  if (t < 0.0) throw std::invalid_argument("hco_apply: t must be non-negative");
}

Tensor conduct(const Tensor& x, const Tensor& coeff, const FrequencyGrid& fg) {
  const bool chw = x.ndim() == 3;
  const int c = chw ? x.shape[0] : 1;
  const int h = chw ? x.shape[1] : x.shape[0];
  const int w = chw ? x.shape[2] : x.shape[1];
  if (h != fg.height() || w != fg.width())
    throw std::invalid_argument("hco_apply: frequency grid size mismatch");
  Tensor out(x.shape);
  for (int ch = 0; ch < c; ++ch) {
    Tensor plane({h, w});
    std::copy_n(x.data.begin() + static_cast<std::size_t>(ch) * h * w, plane.size(),
                plane.data.begin());
    Tensor spec = dct2(plane);
    for (std::int64_t i = 0; i < spec.size(); ++i) spec.data[i] *= coeff.data[i];
    Tensor back = idct2(spec);
    std::copy_n(back.data.begin(), back.size(),
                out.data.begin() + static_cast<std::size_t>(ch) * h * w);
  }
  return out;
}

}  // namespace

Tensor hco_apply(const Tensor& x, double k, double t, const FrequencyGrid& fg) {
  check_kt(k, t);
  Tensor coeff(fg.w2.shape);
  for (std::int64_t i = 0; i < coeff.size(); ++i)
    coeff.data[i] = std::exp(-k * fg.w2.data[i] * t);
  return conduct(x, coeff, fg);
}

Tensor hco_apply(const Tensor& x, const Tensor& k_grid, double t, const FrequencyGrid& fg) {
  if (!k_grid.same_shape(fg.w2))
    throw std::invalid_argument("hco_apply: k grid must match frequency grid");
  if (t < 0.0) throw std::invalid_argument("hco_apply: t must be non-negative");
  Tensor coeff(fg.w2.shape);
  for (std::int64_t i = 0; i < coeff.size(); ++i) {
    if (k_grid.data[i] < 0.0) throw std::invalid_argument("hco_apply: k must be non-negative");
    coeff.data[i] = std::exp(-k_grid.data[i] * fg.w2.data[i] * t);
  }
  return conduct(x, coeff, fg);
}

nn::Var hco_apply(nn::Graph& g, nn::Var x, nn::Var k, double t, const FrequencyGrid& fg) {
  if (t < 0.0) throw std::invalid_argument("hco_apply: t must be non-negative");
  const int ndim = g.value(x).ndim();
  const int channels = ndim == 3 ? g.value(x).shape[0] : 1;
  const int h = fg.height(), w = fg.width();
  nn::Var k_grid = k;
  if (g.value(k).size() == 1) k_grid = g.broadcast_to(g.reshape(k, {1}), {h, w});
  nn::Var coeff = g.vexp(g.scale(g.mul(k_grid, g.constant(fg.w2)), -t));
  if (ndim == 2) return g.idct2(g.mul(g.dct2(x), coeff));
  return g.idct2(g.mul(g.dct2(x), g.broadcast_hw(coeff, channels)));
}

nn::Var predict_k1(nn::Graph& g, nn::Var fe_rows, const nn::LinearLayer& head, int h, int w) {
  if (g.value(fe_rows).shape[0] != h * w)
    throw std::invalid_argument("predict_k1: embedding row count mismatch");
  return g.softplus(g.reshape(head.forward(g, fe_rows), {h, w}));
}

nn::Var predict_k2(nn::Graph& g, nn::Var contour_feats, const nn::LinearLayer& head) {
  const Tensor& cv = g.value(contour_feats);
  if (cv.size() == 0 || cv.shape[0] == 0)
    return g.softplus(g.reshape(g.param(*head.b), {1}));
  nn::Var pooled = g.reshape(g.mean_rows(contour_feats), {1, head.in_dim()});
  return g.softplus(g.reshape(head.forward(g, pooled), {1}));
}

ChcoBlock ChcoBlock::make(nn::ParamStore& ps, const std::string& name, const ChcoConfig& cfg,
                          std::mt19937_64& rng) {
  ChcoBlock b;
  b.cfg = cfg;
  const int c = cfg.channels;
  b.dwconv = nn::DepthwiseConv::make(ps, name + ".dw", c, cfg.dw_kernel, rng);
  b.in_proj = nn::LinearLayer::make(ps, name + ".in", c, c, rng);
  b.fusion_proj = nn::LinearLayer::make(ps, name + ".fusion", 2 * c, c, rng);
  b.out_proj = nn::LinearLayer::make(ps, name + ".out", c, c, rng);
  b.norm = nn::LayerNorm::make(ps, name + ".norm", c);
  // Diffusion starts nearly transparent (softplus(-4) ~ 0.018): the exp(-k w^2)
  // multipliers stay close to 1 at init, and training grows k where smoothing
  // helps. A large initial k wipes out every non-DC frequency in one pass.
  constexpr double kRawInit = -4.0;
  switch (cfg.k_mode) {
    case KMode::FePredicted:
      b.k1_head = nn::LinearLayer::make(ps, name + ".k1", cfg.fe_dim, 1, rng);
      std::fill(b.k1_head.w->value.data.begin(), b.k1_head.w->value.data.end(), 0.0);
      b.k1_head.b->value.data[0] = kRawInit;
      b.k2_head = nn::LinearLayer::make(ps, name + ".k2", cfg.contour_feat_dim, 1, rng);
      std::fill(b.k2_head.w->value.data.begin(), b.k2_head.w->value.data.end(), 0.0);
      b.k2_head.b->value.data[0] = kRawInit;
      break;
    case KMode::Learnable:
      b.k1_raw = &ps.add(name + ".k1_raw", Tensor::full({1}, kRawInit), false);
      b.k2_raw = &ps.add(name + ".k2_raw", Tensor::full({1}, kRawInit), false);
      break;
    case KMode::Fixed:
      break;
  }
  return b;
}

nn::Var ChcoBlock::forward(nn::Graph& g, nn::Var x_e, nn::Var x_of, nn::Var fe_rows,
                           nn::Var contour_feats, const FrequencyGrid& fg,
                           nn::Var* pre_norm) const {
  const Tensor& xv = g.value(x_e);
  if (xv.ndim() != 3 || xv.shape[0] != cfg.channels)
    throw std::invalid_argument("ChcoBlock: input shape mismatch");
  if (!g.value(x_of).same_shape(xv))
    throw std::invalid_argument("ChcoBlock: contour feature map misaligned with input");
  const int h = xv.shape[1], w = xv.shape[2];

  nn::Var k1, k2;
  switch (cfg.k_mode) {
    case KMode::FePredicted:
      k1 = predict_k1(g, fe_rows, k1_head, h, w);
      k2 = predict_k2(g, contour_feats, k2_head);
      break;
    case KMode::Learnable:
      k1 = g.softplus(g.param(*k1_raw));
      k2 = g.softplus(g.param(*k2_raw));
      break;
    case KMode::Fixed:
      k1 = g.constant(Tensor::scalar(cfg.k_fixed));
      k2 = g.constant(Tensor::scalar(cfg.k_fixed));
      break;
  }

  nn::Var u = g.tokens_to_chw(in_proj.forward(g, g.chw_to_tokens(dwconv.forward(g, x_e))), h, w);
  nn::Var x_f = hco_apply(g, u, k1, cfg.t, fg);
  nn::Var x_of_aligned = g.idct2(g.dct2(x_of));
  nn::Var fused = g.tokens_to_chw(
      fusion_proj.forward(g, g.chw_to_tokens(g.concat_ch(x_f, x_of_aligned))), h, w);
  nn::Var conducted = hco_apply(g, fused, k2, cfg.t, fg);
  nn::Var y = g.add(g.tokens_to_chw(out_proj.forward(g, g.chw_to_tokens(conducted)), h, w), u);
  if (pre_norm) *pre_norm = y;
  return norm.forward(g, y);
}

Backbone Backbone::make(nn::ParamStore& ps, const BackboneConfig& cfg, std::mt19937_64& rng) {
  if (cfg.resolution % 32 != 0)
    throw std::invalid_argument("Backbone: resolution must be divisible by 32");
  for (int d : cfg.depths)
    if (d < 1) throw std::invalid_argument("Backbone: stage depth must be >= 1");
  Backbone bb;
  bb.cfg = cfg;
  bb.stem1 = nn::Conv2d::make(ps, "stem.c1", cfg.in_channels, cfg.widths[0], 3, 2, rng);
  bb.stem2 = nn::Conv2d::make(ps, "stem.c2", cfg.widths[0], cfg.widths[0], 3, 2, rng);
  for (int s = 0; s < 3; ++s)
    bb.downsample[s] = nn::Conv2d::make(ps, "down." + std::to_string(s), cfg.widths[s],
                                        cfg.widths[s + 1], 3, 2, rng);
  for (int s = 0; s < 4; ++s) {
    const int hs = cfg.resolution >> (2 + s);
    bb.grids[s] = FrequencyGrid::make(hs, hs);
    if (cfg.k_mode == KMode::FePredicted) {
      bb.fe[s] = &ps.add("fe." + std::to_string(s),
                         nn::init_uniform({hs * hs, cfg.fe_dim}, cfg.fe_dim, rng), false);
    }
    ChcoConfig bc;
    bc.channels = cfg.widths[s];
    bc.fe_dim = cfg.fe_dim;
    bc.contour_feat_dim = cfg.contour_feat_dim;
    bc.k_mode = cfg.k_mode;
    bc.k_fixed = cfg.k_fixed;
    bc.t = cfg.t;
    for (int d = 0; d < cfg.depths[s]; ++d)
      bb.stages[s].push_back(
          ChcoBlock::make(ps, "stage" + std::to_string(s) + ".block" + std::to_string(d), bc, rng));
  }
  return bb;
}

std::array<nn::Var, 4> Backbone::forward(nn::Graph& g, nn::Var x,
                                         const std::array<nn::Var, 4>& x_of,
                                         nn::Var contour_feats) const {
  const Tensor& xv = g.value(x);
  if (xv.ndim() != 3 || xv.shape[0] != cfg.in_channels)
    throw std::invalid_argument("Backbone: input channel mismatch");
  if (xv.shape[1] != cfg.resolution || xv.shape[2] != cfg.resolution)
    throw std::invalid_argument("Backbone: input resolution mismatch");

  std::array<nn::Var, 4> out;
  nn::Var cur = stem2.forward(g, g.relu(stem1.forward(g, x)));
  for (int s = 0; s < 4; ++s) {
    if (s > 0) cur = downsample[s - 1].forward(g, cur);
    const int hs = stage_size(s);
    nn::Var of = x_of[s];
    if (!of.valid()) of = g.constant(Tensor({cfg.widths[s], hs, hs}));
    nn::Var fe_rows;
    if (cfg.k_mode == KMode::FePredicted) fe_rows = g.param(*fe[s]);
    for (const ChcoBlock& block : stages[s])
      cur = block.forward(g, cur, of, fe_rows, contour_feats, grids[s]);
    out[s] = cur;
  }
  return out;
}

}  // namespace cvheat::heat
