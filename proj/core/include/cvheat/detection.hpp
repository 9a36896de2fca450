#pragma once

#include <vector>

#include "cvheat/autodiff.hpp"
#include "cvheat/tensor.hpp"

namespace cvheat::det {

// Axis-aligned box, center form, normalized to [0,1].
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  struct Corners {
    double x1, y1, x2, y2;
  };
  // corner form clipped to the unit square
  Corners corners() const;
  static Box from_corners(double x1, double y1, double x2, double y2);
};

struct Prediction {
  std::vector<double> class_logits;
  Box box;
  double score = 0.0;  // max sigmoid logit
};

struct GroundTruth {
  int class_id = 0;
  Box box;
};

struct QuerySet {
  std::vector<int> indices;  // unique, ascending score rank
};

// Intersection over union in corner form; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

// Minimum-total-cost one-to-one assignment of min(n,m) pairs; (row, col)
// pairs sorted by row. Handles negative costs.
std::vector<std::pair<int, int>> hungarian_match(const Tensor& cost);

// lambda_cls * (-sigmoid logit of g's class) + lambda_l1 * L1 + lambda_iou * (1 - IoU)
double match_cost(const Prediction& p, const GroundTruth& g, double lambda_cls, double lambda_l1,
                  double lambda_iou);

// Varifocal-style classification loss on one (probability, target-IoU) pair.
// Positives: -q * (q log p + (1-q) log(1-p)); negatives: -alpha p^gamma log(1-p).
// Probabilities are clamped to [1e-7, 1-1e-7].
double vfl_loss(double pred_prob, double target_iou, bool is_positive, double alpha, double gamma);

// Top-K token indices by max-class sigmoid score, ties to the lower index.
QuerySet select_queries(const Tensor& class_logits, int k);

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double iou = 2.0;
  double vfl_alpha = 0.75;
  double vfl_gamma = 2.0;
};

struct LossBreakdown {
  double total = 0.0;
  double box_l1 = 0.0;
  double box_iou = 0.0;
  double cls = 0.0;
  std::vector<std::pair<int, int>> assignment;  // (pred, gt)
  std::vector<double> matched_iou;              // per assignment entry
};

// Eq.-style detection loss: L_box (L1 + 1-IoU over Hungarian-matched pairs)
// plus varifocal classification over all queries, normalized by max(1, #gt).
// Differentiable w.r.t. pred_boxes (K,4 center form) and class_logits (K,C).
nn::Var detect_loss(nn::Graph& g, nn::Var pred_boxes, nn::Var class_logits,
                    const std::vector<GroundTruth>& gts, const LossWeights& w,
                    LossBreakdown* breakdown = nullptr);

// Varifocal loss over selection-head logits (T,C): entries listed in
// `positives` as (token, class, q) are positive, everything else negative.
// Normalized by max(1, #gt).
nn::Var selection_loss(nn::Graph& g, nn::Var sel_logits,
                       const std::vector<std::tuple<int, int, double>>& positives, int num_gts,
                       const LossWeights& w);

// ------------------------------------------------------------------ metrics

struct EvalDetection {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
};

struct EvalGroundTruth {
  int image_id = 0;
  int class_id = 0;
  Box box;
};

struct MapResult {
  double map = 0.0;    // averaged over 0.50:0.05:0.95
  double map50 = 0.0;
  double map75 = 0.0;
};

// COCO protocol: per class, score-sorted greedy matching at each threshold,
// 101-point interpolated AP, averaged over classes present in the ground
// truth and over the thresholds (default 0.50:0.05:0.95). map50/map75 are
// filled when the corresponding threshold is part of the sweep.
MapResult evaluate_map(const std::vector<EvalDetection>& preds,
                       const std::vector<EvalGroundTruth>& gts,
                       const std::vector<double>& iou_thresholds);
MapResult evaluate_map(const std::vector<EvalDetection>& preds,
                       const std::vector<EvalGroundTruth>& gts);

}  // namespace cvheat::det
