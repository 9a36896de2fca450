#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cvheat/model.hpp"

namespace cvheat::pipe {

// Adam with decoupled weight decay. Parameters flagged weight_decay=false
// (biases, norms, embeddings) skip the decay term.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::int64_t steps = 0;

  void step(nn::ParamStore& params);
};

// One labeled slice, ready for the model.
struct Sample {
  events::EventTensor frame;
  graph::GraphBundle bundle;
  std::vector<det::GroundTruth> gts;
};

Sample make_sample(const PipelineConfig& cfg, const events::EventSlice& slice,
                   std::vector<det::GroundTruth> gts);

// Slices an event stream and encodes every slice; gts (when given) must have
// one entry per slice.
std::vector<Sample> prepare_samples(const PipelineConfig& cfg,
                                    const std::vector<events::Event>& stream,
                                    const std::vector<std::vector<det::GroundTruth>>* gts);

struct TrainOptions {
  std::string out_dir;             // loss log and metric curve land here if set
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<std::pair<int, double>> val_curve;  // (step, val mAP@50)
  double final_map50 = 0.0;
};

// Seeded AdamW loop with horizontal-flip augmentation and periodic
// validation. Aborts with a diagnostic dump on a non-finite loss.
TrainResult train(Model& model, const PipelineConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainOptions& opts);

// Forward-only detection over samples; image_id is the sample index.
std::vector<det::EvalDetection> predict(Model& model, const std::vector<Sample>& samples);
det::MapResult evaluate(Model& model, const std::vector<Sample>& samples);

Sample flipped_sample(const PipelineConfig& cfg, const Sample& s);

}  // namespace cvheat::pipe
