#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvheat/events.hpp"
#include "cvheat/heat.hpp"

namespace cvheat::pipe {

enum class GraphMode { None, Global, Subgraph, Contour, All };

// Flat key=value configuration covering every module default and every
// ablation axis (k mode, graph scales, input format, resolution, depths).
// Parsing rejects unknown keys; serialize(parse(x)) is idempotent.
struct PipelineConfig {
  std::uint64_t seed = 7;

  // event_io
  int resolution = 640;               // sensor and model input, H = W
  std::int64_t slice_interval_us = 10000;
  events::Encoding encoding = events::Encoding::Frame;
  int voxel_bins = 3;

  // graph_pipeline
  int patch_h = 8, patch_w = 8;
  double dist_threshold = 20.0;       // R_d
  int node_threshold = 5;             // R_n
  int knn_k = 4;
  GraphMode graph_mode = GraphMode::All;

  // nn_core / heat_conduction
  int gcn_layers = 2, gcn_width = 64;
  int fe_dim = 16;
  heat::KMode k_mode = heat::KMode::FePredicted;
  double k_fixed = 3.0;
  std::array<int, 4> stage_depths{2, 2, 12, 2};
  std::array<int, 4> stage_widths{64, 128, 256, 512};

  // detection
  int num_classes = 3;
  int queries = 100;
  double lambda_cls = 2.0, lambda_l1 = 5.0, lambda_iou = 2.0;
  double vfl_alpha = 0.75, vfl_gamma = 2.0;

  // training
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int train_steps = 2000;
  int eval_every = 500;
  int batch_size = 1;
  double hflip_prob = 0.5;

  int in_channels() const {
    return encoding == events::Encoding::Frame ? 2 : 2 * voxel_bins;
  }
  int patch_feat_dim() const { return in_channels() * patch_h * patch_w; }
  int final_tokens() const {
    const int s = resolution / 32;
    return s * s;
  }

  void validate() const;  // throws std::invalid_argument with the failing key
};

PipelineConfig parse_config(std::istream& in);
PipelineConfig parse_config_file(const std::string& path);
// Merge "key=value" overrides (CLI flags) into an existing config.
void apply_override(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const PipelineConfig& cfg);
// Every accepted key, in serialization order (drives CLI flag generation).
const std::vector<std::string>& config_keys();

std::string to_string(GraphMode m);
std::string to_string(heat::KMode m);

}  // namespace cvheat::pipe
