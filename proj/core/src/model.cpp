#include "cvheat/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cvheat::pipe {

namespace {

double logit(double z) {
  z = std::min(0.99, std::max(0.01, z));
  return std::log(z / (1.0 - z));
}

Tensor node_feature_matrix(const graph::SpatialGraph& gr, int expected_dim) {
  Tensor feats({gr.node_count(), expected_dim});
  for (int i = 0; i < gr.node_count(); ++i) {
    if (static_cast<int>(gr.nodes[i].feat.size()) != expected_dim)
      throw std::invalid_argument("model: node feature width mismatch");
    for (int f = 0; f < expected_dim; ++f) feats.at2(i, f) = gr.nodes[i].feat[f];
  }
  return feats;
}

}  // namespace

GcnStack GcnStack::make(nn::ParamStore& ps, const std::string& name, int in, int width,
                        int n_layers, std::mt19937_64& rng) {
  GcnStack s;
  for (int l = 0; l < n_layers; ++l)
    s.layers.push_back(
        nn::GcnLayer::make(ps, name + ".l" + std::to_string(l), l == 0 ? in : width, width, rng));
  return s;
}

nn::Var GcnStack::forward(nn::Graph& g, const graph::SpatialGraph& gr) const {
  nn::Var h = g.constant(node_feature_matrix(gr, layers.front().w->value.shape[1]));
  for (const auto& layer : layers) h = layer.forward(g, h, gr);
  return h;
}

Model::Model(const PipelineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);

  heat::BackboneConfig bc;
  bc.depths = cfg_.stage_depths;
  bc.widths = cfg_.stage_widths;
  bc.in_channels = cfg_.in_channels();
  bc.resolution = cfg_.resolution;
  bc.fe_dim = cfg_.fe_dim;
  bc.contour_feat_dim = cfg_.patch_feat_dim();
  bc.k_mode = cfg_.k_mode;
  bc.k_fixed = cfg_.k_fixed;
  backbone_ = heat::Backbone::make(params_, bc, rng);

  const int pf = cfg_.patch_feat_dim();
  gcn_global_ = GcnStack::make(params_, "gcn.global", pf, cfg_.gcn_width, cfg_.gcn_layers, rng);
  gcn_subgraph_ =
      GcnStack::make(params_, "gcn.subgraph", pf, cfg_.gcn_width, cfg_.gcn_layers, rng);
  gcn_contour_ = GcnStack::make(params_, "gcn.contour", pf, cfg_.gcn_width, cfg_.gcn_layers, rng);
  for (int s = 0; s < 4; ++s)
    stage_proj_[s] = nn::LinearLayer::make(params_, "proj.stage" + std::to_string(s),
                                           cfg_.gcn_width, cfg_.stage_widths[s], rng);

  const int w3 = cfg_.stage_widths[3];
  sel_head_ = nn::LinearLayer::make(params_, "head.sel", w3, cfg_.num_classes, rng);
  det_h1_ = nn::LinearLayer::make(params_, "head.mlp1", w3, w3, rng);
  det_h2_ = nn::LinearLayer::make(params_, "head.mlp2", w3, w3, rng);
  det_out_ = nn::LinearLayer::make(params_, "head.out", w3, cfg_.num_classes + 4, rng);
  // box deltas start at zero so initial boxes sit exactly on their anchors
  for (int r = cfg_.num_classes; r < cfg_.num_classes + 4; ++r) {
    for (int c = 0; c < w3; ++c) det_out_.w->value.at2(r, c) = 0.0;
    det_out_.b->value.data[r] = 0.0;
  }
}

const graph::SpatialGraph* Model::stage_graph(const graph::GraphBundle& bundle, int stage) const {
  switch (cfg_.graph_mode) {
    case GraphMode::None: return nullptr;
    case GraphMode::Global: return &bundle.global;
    case GraphMode::Subgraph: return &bundle.subgraph_union;
    case GraphMode::Contour: return &bundle.contour;
    case GraphMode::All:
      // shallow stage sees the global scale, mid the connected subgraphs,
      // deep stages the contour graph
      if (stage == 0) return &bundle.global;
      if (stage == 1) return &bundle.subgraph_union;
      return &bundle.contour;
  }
  return nullptr;
}

nn::Var Model::project_stage_features(nn::Graph& g, const graph::GraphBundle& bundle, int stage) {
  const graph::SpatialGraph* gr = stage_graph(bundle, stage);
  if (gr == nullptr) return {};
  const int hs = backbone_.stage_size(stage);
  if (gr->node_count() == 0)
    return g.constant(Tensor({cfg_.stage_widths[stage], hs, hs}));

  const GcnStack& stack = gr == &bundle.global      ? gcn_global_
                          : gr == &bundle.contour   ? gcn_contour_
                                                    : gcn_subgraph_;
  nn::Var node_out = stack.forward(g, *gr);

  const double stride = static_cast<double>(cfg_.resolution) / hs;
  std::vector<int> cells(gr->node_count());
  for (int i = 0; i < gr->node_count(); ++i) {
    int col = static_cast<int>(gr->nodes[i].x / stride);
    int row = static_cast<int>(gr->nodes[i].y / stride);
    col = std::min(std::max(col, 0), hs - 1);
    row = std::min(std::max(row, 0), hs - 1);
    cells[i] = row * hs + col;
  }
  nn::Var grid = g.scatter_mean(node_out, cells, hs, hs);
  return g.tokens_to_chw(stage_proj_[stage].forward(g, g.chw_to_tokens(grid)), hs, hs);
}

Model::Output Model::forward(nn::Graph& g, const events::EventTensor& frame,
                             const graph::GraphBundle& bundle) {
  if (frame.channels() != cfg_.in_channels())
    throw std::invalid_argument("model: frame channels do not match configured encoding");

  // log1p squashes raw event counts to a stem-friendly range
  Tensor squashed = frame.data;
  for (double& v : squashed.data) v = std::log1p(v);
  nn::Var x = g.constant(std::move(squashed));

  std::array<nn::Var, 4> x_of;
  for (int s = 0; s < 4; ++s) x_of[s] = project_stage_features(g, bundle, s);

  nn::Var contour_feats;
  if (cfg_.graph_mode == GraphMode::None || bundle.contour.node_count() == 0)
    contour_feats = g.constant(Tensor({0, cfg_.patch_feat_dim()}));
  else
    contour_feats = g.constant(node_feature_matrix(bundle.contour, cfg_.patch_feat_dim()));

  Output out;
  out.stages = backbone_.forward(g, x, x_of, contour_feats);

  nn::Var tokens = g.chw_to_tokens(out.stages[3]);  // (T, w3)
  out.sel_logits = sel_head_.forward(g, tokens);

  const det::QuerySet qs = det::select_queries(g.value(out.sel_logits), cfg_.queries);
  out.query_indices = qs.indices;

  nn::Var qfeats = g.gather_rows(tokens, qs.indices);
  nn::Var h = g.relu(det_h1_.forward(g, qfeats));
  h = g.relu(det_h2_.forward(g, h));
  nn::Var raw = det_out_.forward(g, h);  // (K, num_classes + 4)

  const int k = static_cast<int>(qs.indices.size());
  const int nc = cfg_.num_classes;
  std::vector<std::int64_t> cls_idx, box_idx;
  for (int i = 0; i < k; ++i) {
    for (int c = 0; c < nc; ++c) cls_idx.push_back(static_cast<std::int64_t>(i) * (nc + 4) + c);
    for (int c = 0; c < 4; ++c) box_idx.push_back(static_cast<std::int64_t>(i) * (nc + 4) + nc + c);
  }
  out.class_logits = g.reshape(g.gather(raw, cls_idx), {k, nc});

  // anchor logits: token grid cell center, anchor size two cells
  const int grid = cfg_.resolution / 32;
  Tensor anchor_logits({k, 4});
  for (int i = 0; i < k; ++i) {
    const int token = qs.indices[i];
    const int row = token / grid, col = token % grid;
    anchor_logits.at2(i, 0) = logit((col + 0.5) / grid);
    anchor_logits.at2(i, 1) = logit((row + 0.5) / grid);
    anchor_logits.at2(i, 2) = logit(std::min(0.9, 2.0 / grid));
    anchor_logits.at2(i, 3) = logit(std::min(0.9, 2.0 / grid));
  }
  nn::Var deltas = g.reshape(g.gather(raw, box_idx), {k, 4});
  out.pred_boxes = g.sigmoid(g.add(deltas, g.constant(std::move(anchor_logits))));
  return out;
}

std::vector<det::Prediction> Model::to_predictions(const nn::Graph& g, const Output& out) const {
  const Tensor& logits = g.value(out.class_logits);
  const Tensor& boxes = g.value(out.pred_boxes);
  const int k = logits.shape[0], nc = logits.shape[1];
  std::vector<det::Prediction> preds(k);
  for (int i = 0; i < k; ++i) {
    det::Prediction& p = preds[i];
    p.class_logits.resize(nc);
    double best = -1e30;
    for (int c = 0; c < nc; ++c) {
      p.class_logits[c] = logits.at2(i, c);
      best = std::max(best, logits.at2(i, c));
    }
    p.score = 1.0 / (1.0 + std::exp(-best));
    p.box = {boxes.at2(i, 0), boxes.at2(i, 1), boxes.at2(i, 2), boxes.at2(i, 3)};
  }
  return preds;
}

}  // namespace cvheat::pipe
