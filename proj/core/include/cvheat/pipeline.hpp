#pragma once

#include <string>
#include <vector>

#include "cvheat/train.hpp"

namespace cvheat::pipe {

struct RunArtifacts {
  std::vector<det::EvalDetection> detections;
  det::MapResult metrics;
  bool has_metrics = false;
};

// Full forward path per slice: encode -> graphs -> backbone -> queries ->
// detections. Writes detections.txt (and metrics.txt when ground truth is
// present, stage heat maps when requested) under out_dir if non-empty.
RunArtifacts run_pipeline(Model& model, const PipelineConfig& cfg,
                          const std::vector<Sample>& samples, const std::string& out_dir,
                          bool write_heatmaps);

void write_metrics_report(const std::string& path, const det::MapResult& m);

}  // namespace cvheat::pipe
