#include "cvheat/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cvheat::pipe {

void AdamW::step(nn::ParamStore& params) {
  ++steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (nn::Parameter& p : params.all()) {
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      p.adam_m.data[i] = beta1 * p.adam_m.data[i] + (1.0 - beta1) * g;
      p.adam_v.data[i] = beta2 * p.adam_v.data[i] + (1.0 - beta2) * g * g;
      const double mhat = p.adam_m.data[i] / bc1;
      const double vhat = p.adam_v.data[i] / bc2;
      p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      if (p.weight_decay) p.value.data[i] -= lr * weight_decay * p.value.data[i];
    }
  }
}

Sample make_sample(const PipelineConfig& cfg, const events::EventSlice& slice,
                   std::vector<det::GroundTruth> gts) {
  Sample s;
  s.frame = cfg.encoding == events::Encoding::Frame
                ? events::encode_frame(slice, cfg.resolution, cfg.resolution)
                : events::encode_voxel(slice, cfg.resolution, cfg.resolution, cfg.voxel_bins);
  if (cfg.graph_mode != GraphMode::None) {
    graph::GraphConfig gc{cfg.patch_h, cfg.patch_w, cfg.dist_threshold, cfg.node_threshold,
                          cfg.knn_k};
    s.bundle = graph::build_bundle(s.frame, gc);
  }
  s.gts = std::move(gts);
  return s;
}

std::vector<Sample> prepare_samples(const PipelineConfig& cfg,
                                    const std::vector<events::Event>& stream,
                                    const std::vector<std::vector<det::GroundTruth>>* gts) {
  const auto slices = events::slice_stream(stream, cfg.slice_interval_us);
  std::vector<Sample> out;
  out.reserve(slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    std::vector<det::GroundTruth> g;
    if (gts) {
      if (i >= gts->size())
        throw std::invalid_argument("prepare_samples: ground truth shorter than slice list");
      g = (*gts)[i];
    }
    out.push_back(make_sample(cfg, slices[i], std::move(g)));
  }
  return out;
}

Sample flipped_sample(const PipelineConfig& cfg, const Sample& s) {
  Sample f;
  f.frame = events::hflip(s.frame);
  if (cfg.graph_mode != GraphMode::None) {
    graph::GraphConfig gc{cfg.patch_h, cfg.patch_w, cfg.dist_threshold, cfg.node_threshold,
                          cfg.knn_k};
    f.bundle = graph::build_bundle(f.frame, gc);
  }
  f.gts = s.gts;
  for (det::GroundTruth& g : f.gts) g.box.cx = 1.0 - g.box.cx;
  return f;
}

std::vector<det::EvalDetection> predict(Model& model, const std::vector<Sample>& samples) {
  std::vector<det::EvalDetection> out;
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
      out.push_back(d);
    }
  }
  return out;
}

det::MapResult evaluate(Model& model, const std::vector<Sample>& samples) {
  std::vector<det::EvalGroundTruth> gts;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (const det::GroundTruth& g : samples[i].gts) {
      det::EvalGroundTruth e;
      e.image_id = static_cast<int>(i);
      e.class_id = g.class_id;
      e.box = g.box;
      gts.push_back(e);
    }
  return det::evaluate_map(predict(model, samples), gts);
}

namespace {

det::LossWeights loss_weights(const PipelineConfig& cfg) {
  det::LossWeights w;
  w.cls = cfg.lambda_cls;
  w.l1 = cfg.lambda_l1;
  w.iou = cfg.lambda_iou;
  w.vfl_alpha = cfg.vfl_alpha;
  w.vfl_gamma = cfg.vfl_gamma;
  return w;
}

[[noreturn]] void abort_nonfinite(const std::string& out_dir, int step, const Model& model,
                                  const det::LossBreakdown& bd) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << "\n"
     << "box_l1=" << bd.box_l1 << " box_iou=" << bd.box_iou << " cls=" << bd.cls << "\n"
     << "parameters=" << model.parameter_count() << "\n";
  if (!out_dir.empty()) {
    std::ofstream dump(out_dir + "/diagnostic.txt");
    dump << os.str();
  }
  throw std::runtime_error("train: " + os.str());
}

}  // namespace

TrainResult train(Model& model, const PipelineConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainOptions& opts) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  AdamW opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  std::mt19937_64 rng(cfg.seed ^ 0x7261696e6c6f6f70ull);
  std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const det::LossWeights w = loss_weights(cfg);
  TrainResult res;
  std::ofstream loss_log;
  if (!opts.out_dir.empty()) {
    loss_log.open(opts.out_dir + "/loss_log.txt");
    if (!loss_log) throw std::runtime_error("train: cannot write loss log in " + opts.out_dir);
    loss_log << std::fixed << std::setprecision(9);
  }

  for (int step = 1; step <= cfg.train_steps; ++step) {
    // cosine decay from the initial rate to 10% of it
    const double progress = static_cast<double>(step - 1) / cfg.train_steps;
    opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + std::cos(3.14159265358979323846 * progress)));

    model.params().zero_grad();
    double loss_v = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Sample& base = train_set[pick(rng)];
      const bool flip = coin(rng) < cfg.hflip_prob;
      const Sample sample = flip ? flipped_sample(cfg, base) : base;

      nn::Graph g;
      Model::Output fwd = model.forward(g, sample.frame, sample.bundle);
      det::LossBreakdown bd;
      nn::Var loss = det::detect_loss(g, fwd.pred_boxes, fwd.class_logits, sample.gts, w, &bd);
      // selection head trains on the same IoU-aware targets, mapped to tokens
      std::vector<std::tuple<int, int, double>> sel_pos;
      for (std::size_t a = 0; a < bd.assignment.size(); ++a) {
        const int token = fwd.query_indices[bd.assignment[a].first];
        sel_pos.emplace_back(token, sample.gts[bd.assignment[a].second].class_id,
                             bd.matched_iou[a]);
      }
      loss = g.add(loss, det::selection_loss(g, fwd.sel_logits, sel_pos,
                                             static_cast<int>(sample.gts.size()), w));
      loss = g.scale(loss, 1.0 / cfg.batch_size);
      const double v = g.value(loss).data[0];
      if (!std::isfinite(v)) abort_nonfinite(opts.out_dir, step, model, bd);
      loss_v += v;
      g.backward(loss);
    }
    opt.step(model.params());

    res.losses.push_back(loss_v);
    if (loss_log) loss_log << step << " " << loss_v << "\n";

    if (!val_set.empty() && (step % cfg.eval_every == 0 || step == cfg.train_steps)) {
      const det::MapResult m = evaluate(model, val_set);
      res.val_curve.emplace_back(step, m.map50);
      res.final_map50 = m.map50;
      if (opts.progress)
        (*opts.progress) << "step " << step << " loss " << loss_v << " val mAP@50 " << m.map50
                         << "\n";
    } else if (opts.progress && step % 100 == 0) {
      (*opts.progress) << "step " << step << " loss " << loss_v << "\n";
    }
  }

  if (!opts.out_dir.empty()) {
    std::ofstream curve(opts.out_dir + "/metric_curve.csv");
    curve << "step,val_map50\n" << std::fixed << std::setprecision(6);
    for (auto [s, v] : res.val_curve) curve << s << "," << v << "\n";
  }
  return res;
}

}  // namespace cvheat::pipe
