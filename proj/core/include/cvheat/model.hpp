#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cvheat/config.hpp"
#include "cvheat/detection.hpp"
#include "cvheat/graph.hpp"
#include "cvheat/heat.hpp"

namespace cvheat::pipe {

// A stack of GCN layers applied to one graph scale.
struct GcnStack {
  std::vector<nn::GcnLayer> layers;

  static GcnStack make(nn::ParamStore& ps, const std::string& name, int in, int width,
                       int n_layers, std::mt19937_64& rng);
  // Runs over the graph's own node features; (n, width) output, n may be 0.
  nn::Var forward(nn::Graph& g, const graph::SpatialGraph& gr) const;
};

// The full CvHeat detector: stem + four CHCO stages fed by per-stage graph
// features, followed by IoU-trained query selection and a 3-layer MLP head
// predicting class logits and anchor-relative boxes.
class Model {
 public:
  explicit Model(const PipelineConfig& cfg);

  struct Output {
    std::array<nn::Var, 4> stages;
    nn::Var sel_logits;               // (T, num_classes) selection head
    std::vector<int> query_indices;   // K selected tokens
    nn::Var class_logits;             // (K, num_classes)
    nn::Var pred_boxes;               // (K, 4) center form in (0,1)
  };

  Output forward(nn::Graph& g, const events::EventTensor& frame,
                 const graph::GraphBundle& bundle);

  // Per-stage graph feature map: GCN over the stage's graph scale, nodes
  // scattered to grid cells (collisions averaged), then a 1x1 projection.
  // Returns an invalid Var when the stage has no graph (mode none / empty).
  nn::Var project_stage_features(nn::Graph& g, const graph::GraphBundle& bundle, int stage);

  std::vector<det::Prediction> to_predictions(const nn::Graph& g, const Output& out) const;

  nn::ParamStore& params() { return params_; }
  const PipelineConfig& config() const { return cfg_; }
  std::int64_t parameter_count() const { return params_.count(); }

 private:
  const graph::SpatialGraph* stage_graph(const graph::GraphBundle& bundle, int stage) const;

  PipelineConfig cfg_;
  nn::ParamStore params_;
  heat::Backbone backbone_;
  GcnStack gcn_global_, gcn_subgraph_, gcn_contour_;
  std::array<nn::LinearLayer, 4> stage_proj_;
  nn::LinearLayer sel_head_;
  nn::LinearLayer det_h1_, det_h2_, det_out_;
};

}  // namespace cvheat::pipe
