#pragma once

#include <array>
#include <random>
#include <vector>

#include "cvheat/autodiff.hpp"
#include "cvheat/dct.hpp"
#include "cvheat/nn.hpp"

namespace cvheat::heat {

// Squared angular frequencies of the DCT-II basis under Neumann boundary
// conditions: w2[i][j] = (pi*i/H)^2 + (pi*j/W)^2.
struct FrequencyGrid {
  Tensor w2;  // (H, W)
  static FrequencyGrid make(int h, int w);
  int height() const { return w2.shape[0]; }
  int width() const { return w2.shape[1]; }
};

// Spectral heat conduction: y = idct2(dct2(x) * exp(-k * w2 * t)) per channel.
// Accepts (H,W) or (C,H,W); k is a scalar or an (H,W) per-frequency grid.
Tensor hco_apply(const Tensor& x, double k, double t, const FrequencyGrid& fg);
Tensor hco_apply(const Tensor& x, const Tensor& k_grid, double t, const FrequencyGrid& fg);

// Differentiable variant; k is a (1,) scalar or (H,W) grid Var (both w.r.t.
// which gradients flow).
nn::Var hco_apply(nn::Graph& g, nn::Var x, nn::Var k, double t, const FrequencyGrid& fg);

// Per-frequency diffusivity from frequency embeddings: softplus(head(fe)).
// fe rows are (H*W, d); the result is an (H,W) grid.
nn::Var predict_k1(nn::Graph& g, nn::Var fe_rows, const nn::LinearLayer& head, int h, int w);

// Pooled scalar diffusivity from contour node features; an empty graph falls
// back to softplus(head bias).
nn::Var predict_k2(nn::Graph& g, nn::Var contour_feats, const nn::LinearLayer& head);

enum class KMode { Fixed, Learnable, FePredicted };

struct ChcoConfig {
  int channels = 0;
  int dw_kernel = 3;
  int fe_dim = 16;
  int contour_feat_dim = 0;  // raw contour node feature width
  KMode k_mode = KMode::FePredicted;
  double k_fixed = 3.0;
  double t = 1.0;
};

// Contour-aware heat conduction block:
//   u    = in_proj(dwconv(x_e))
//   x_f  = hco(u, k1, t)
//   x_of' = idct2(dct2(x_of))            spectral alignment hook
//   f    = fusion_proj(concat(x_f, x_of'))
//   y    = norm(out_proj(hco(f, k2, t)) + u)
struct ChcoBlock {
  ChcoConfig cfg;
  nn::DepthwiseConv dwconv;
  nn::LinearLayer in_proj, fusion_proj, out_proj;
  nn::LinearLayer k1_head, k2_head;      // FePredicted mode
  nn::Parameter* k1_raw = nullptr;       // Learnable mode (pre-softplus)
  nn::Parameter* k2_raw = nullptr;
  nn::LayerNorm norm;

  static ChcoBlock make(nn::ParamStore& ps, const std::string& name, const ChcoConfig& cfg,
                        std::mt19937_64& rng);
  // fe_rows: (H*W, fe_dim) Var (FePredicted only). contour_feats: (n, d) Var,
  // n may be zero. pre_norm, when given, receives the residual sum before the
  // final norm (diagnostics).
  nn::Var forward(nn::Graph& g, nn::Var x_e, nn::Var x_of, nn::Var fe_rows, nn::Var contour_feats,
                  const FrequencyGrid& fg, nn::Var* pre_norm = nullptr) const;
};

struct BackboneConfig {
  std::array<int, 4> depths{2, 2, 12, 2};
  std::array<int, 4> widths{64, 128, 256, 512};
  int in_channels = 2;
  int resolution = 640;      // input H = W, divisible by 32
  int fe_dim = 16;
  int contour_feat_dim = 0;
  KMode k_mode = KMode::FePredicted;
  double k_fixed = 3.0;
  double t = 1.0;
};

// Stem (two stride-2 3x3 convs) followed by four stages of stacked CHCO
// blocks with stride-2 downsampling between stages. Stage grids sit at
// 1/4, 1/8, 1/16 and 1/32 of the input.
struct Backbone {
  BackboneConfig cfg;
  nn::Conv2d stem1, stem2;
  std::array<nn::Conv2d, 3> downsample;  // between consecutive stages
  std::array<std::vector<ChcoBlock>, 4> stages;
  std::array<nn::Parameter*, 4> fe{};    // (H_s*W_s, fe_dim), FePredicted only
  std::array<FrequencyGrid, 4> grids;

  static Backbone make(nn::ParamStore& ps, const BackboneConfig& cfg, std::mt19937_64& rng);
  int stage_size(int stage) const { return cfg.resolution >> (2 + stage); }

  // x_of[s] must be (widths[s], H_s, W_s) or an invalid Var for "no graph
  // features" (treated as zeros). contour_feats may be an empty (0,d) Var.
  std::array<nn::Var, 4> forward(nn::Graph& g, nn::Var x, const std::array<nn::Var, 4>& x_of,
                                 nn::Var contour_feats) const;
};

}  // namespace cvheat::heat
