#include "cvheat/pipeline.hpp"

#include <fstream>
#include <iomanip>

#include "cvheat/io.hpp"

namespace cvheat::pipe {

RunArtifacts run_pipeline(Model& model, const PipelineConfig& cfg,
                          const std::vector<Sample>& samples, const std::string& out_dir,
                          bool write_heatmaps) {
  RunArtifacts art;
  bool any_gt = false;
  std::vector<det::EvalGroundTruth> gts;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nn::Graph g;
    const Model::Output fwd = model.forward(g, samples[i].frame, samples[i].bundle);
    const auto preds = model.to_predictions(g, fwd);
    for (const det::Prediction& p : preds) {
      det::EvalDetection d;
      d.image_id = static_cast<int>(i);
      int best = 0;
      for (std::size_t c = 1; c < p.class_logits.size(); ++c)
        if (p.class_logits[c] > p.class_logits[best]) best = static_cast<int>(c);
      d.class_id = best;
      d.score = p.score;
      d.box = p.box;
      art.detections.push_back(d);
    }
    for (const det::GroundTruth& g2 : samples[i].gts) {
      any_gt = true;
      det::EvalGroundTruth e;
      e.image_id = static_cast<int>(i);
      e.class_id = g2.class_id;
      e.box = g2.box;
      gts.push_back(e);
    }
    if (write_heatmaps && !out_dir.empty()) {
      for (int s = 0; s < 4; ++s) {
        const Tensor map = io::heatmap_of(g.value(fwd.stages[s]));
        io::write_pgm(out_dir + "/heat_slice" + std::to_string(i) + "_stage" + std::to_string(s) +
                          ".pgm",
                      map);
      }
    }
  }
  if (any_gt) {
    art.metrics = det::evaluate_map(art.detections, gts);
    art.has_metrics = true;
  }
  if (!out_dir.empty()) {
    io::write_detections(out_dir + "/detections.txt", art.detections);
    if (art.has_metrics) write_metrics_report(out_dir + "/metrics.txt", art.metrics);
  }
  (void)cfg;
  return art;
}

void write_metrics_report(const std::string& path, const det::MapResult& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << std::fixed << std::setprecision(6);
  out << "mAP@50:95 " << m.map << "\n";
  out << "mAP@50 " << m.map50 << "\n";
  out << "mAP@75 " << m.map75 << "\n";
}

}  // namespace cvheat::pipe
