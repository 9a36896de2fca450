#include "cvheat/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace cvheat::det {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

constexpr double kProbEps = 1e-7;

double clamp_prob(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

}  // namespace

Box::Corners Box::corners() const {
  return {clamp01(cx - w / 2.0), clamp01(cy - h / 2.0), clamp01(cx + w / 2.0),
          clamp01(cy + h / 2.0)};
}

Box Box::from_corners(double x1, double y1, double x2, double y2) {
  Box b;
  b.cx = (x1 + x2) / 2.0;
  b.cy = (y1 + y2) / 2.0;
  b.w = x2 - x1;
  b.h = y2 - y1;
  return b;
}

double iou(const Box& a, const Box& b) {
  const auto ca = a.corners(), cb = b.corners();
  const double iw = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double ih = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (ca.x2 - ca.x1) * (ca.y2 - ca.y1);
  const double area_b = (cb.x2 - cb.x1) * (cb.y2 - cb.y1);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::pair<int, int>> hungarian_match(const Tensor& cost) {
  if (cost.ndim() != 2) throw std::invalid_argument("hungarian_match: rank-2 cost required");
  for (double v : cost.data)
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_match: non-finite cost");
  const int rows = cost.shape[0], cols = cost.shape[1];
  if (rows == 0 || cols == 0) return {};
  const bool flip = rows > cols;
  const int n = flip ? cols : rows;
  const int m = flip ? rows : cols;
  auto at = [&](int i, int j) { return flip ? cost.at2(j, i) : cost.at2(i, j); };

  // shortest augmenting path with potentials, 1-indexed
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::pair<int, int>> out;
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) out.push_back(flip ? std::make_pair(j - 1, p[j] - 1)
                                      : std::make_pair(p[j] - 1, j - 1));
  std::sort(out.begin(), out.end());
  return out;
}

double match_cost(const Prediction& p, const GroundTruth& g, double lambda_cls, double lambda_l1,
                  double lambda_iou) {
  if (lambda_cls < 0.0 || lambda_l1 < 0.0 || lambda_iou < 0.0)
    throw std::invalid_argument("match_cost: weights must be non-negative");
  if (g.class_id < 0 || g.class_id >= static_cast<int>(p.class_logits.size()))
    throw std::invalid_argument("match_cost: class id out of range");
  const double prob = sigmoid(p.class_logits[g.class_id]);
  const double l1 = std::fabs(p.box.cx - g.box.cx) + std::fabs(p.box.cy - g.box.cy) +
                    std::fabs(p.box.w - g.box.w) + std::fabs(p.box.h - g.box.h);
  return lambda_cls * (-prob) + lambda_l1 * l1 + lambda_iou * (1.0 - iou(p.box, g.box));
}

double vfl_loss(double pred_prob, double target_iou, bool is_positive, double alpha,
                double gamma) {
  const double p = clamp_prob(pred_prob);
  if (is_positive) {
    const double q = target_iou;
    return -q * (q * std::log(p) + (1.0 - q) * std::log(1.0 - p));
  }
  return -alpha * std::pow(p, gamma) * std::log(1.0 - p);
}

QuerySet select_queries(const Tensor& class_logits, int k) {
  if (class_logits.ndim() != 2)
    throw std::invalid_argument("select_queries: rank-2 logits required");
  const int tokens = class_logits.shape[0], classes = class_logits.shape[1];
  if (k < 0 || k > tokens)
    throw std::invalid_argument("select_queries: K exceeds token count");
  std::vector<std::pair<double, int>> ranked(tokens);
  for (int i = 0; i < tokens; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) best = std::max(best, class_logits.at2(i, c));
    ranked[i] = {sigmoid(best), i};
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  QuerySet qs;
  qs.indices.reserve(k);
  for (int i = 0; i < k; ++i) qs.indices.push_back(ranked[i].second);
  return qs;
}

namespace {

// Differentiable IoU over matched pairs: pred coordinate vectors (M each) vs
// constant gt corners. Returns the (M,) IoU vector.
nn::Var pairwise_iou(nn::Graph& g, nn::Var pcx, nn::Var pcy, nn::Var pw, nn::Var ph,
                     const std::vector<Box>& gt_boxes) {
  const int m = static_cast<int>(gt_boxes.size());
  Tensor gx1({m}), gy1({m}), gx2({m}), gy2({m}), garea({m});
  for (int i = 0; i < m; ++i) {
    const auto c = gt_boxes[i].corners();
    gx1.data[i] = c.x1;
    gy1.data[i] = c.y1;
    gx2.data[i] = c.x2;
    gy2.data[i] = c.y2;
    garea.data[i] = (c.x2 - c.x1) * (c.y2 - c.y1);
  }
  nn::Var ax1 = g.clamp(g.sub(pcx, g.scale(pw, 0.5)), 0.0, 1.0);
  nn::Var ay1 = g.clamp(g.sub(pcy, g.scale(ph, 0.5)), 0.0, 1.0);
  nn::Var ax2 = g.clamp(g.add(pcx, g.scale(pw, 0.5)), 0.0, 1.0);
  nn::Var ay2 = g.clamp(g.add(pcy, g.scale(ph, 0.5)), 0.0, 1.0);
  nn::Var iw = g.relu(g.sub(g.vmin(ax2, g.constant(gx2)), g.vmax(ax1, g.constant(gx1))));
  nn::Var ih = g.relu(g.sub(g.vmin(ay2, g.constant(gy2)), g.vmax(ay1, g.constant(gy1))));
  nn::Var inter = g.mul(iw, ih);
  nn::Var area_a = g.mul(g.sub(ax2, ax1), g.sub(ay2, ay1));
  nn::Var uni = g.sub(g.add(area_a, g.constant(garea)), inter);
  return g.vdiv(inter, uni);
}

// Varifocal loss over a (N,C) logit matrix given a sparse positive set.
nn::Var vfl_matrix(nn::Graph& g, nn::Var logits,
                   const std::vector<std::tuple<int, int, double>>& positives,
                   const LossWeights& w) {
  const Tensor& lv = g.value(logits);
  const int n = lv.shape[0], c = lv.shape[1];
  Tensor q({n, c}), pos({n, c});
  for (const auto& [token, cls, tiou] : positives) {
    if (token < 0 || token >= n || cls < 0 || cls >= c)
      throw std::invalid_argument("vfl: positive entry out of range");
    q.at2(token, cls) = tiou;
    pos.at2(token, cls) = 1.0;
  }
  Tensor neg = pos;
  for (double& v : neg.data) v = 1.0 - v;

  nn::Var p = g.clamp(g.sigmoid(logits), kProbEps, 1.0 - kProbEps);
  nn::Var logp = g.vlog(p);
  nn::Var log1mp = g.vlog(g.sub(g.constant(Tensor::full({n, c}, 1.0)), p));
  Tensor q2 = q, q1mq = q;
  for (std::int64_t i = 0; i < q.size(); ++i) {
    q2.data[i] = q.data[i] * q.data[i];
    q1mq.data[i] = q.data[i] * (1.0 - q.data[i]);
  }
  // positives: -(q^2 log p + q(1-q) log(1-p))
  nn::Var pos_term = g.neg(g.add(g.mul(g.constant(q2), logp), g.mul(g.constant(q1mq), log1mp)));
  // negatives: -alpha p^gamma log(1-p)
  nn::Var neg_term = g.scale(g.mul(g.vpow(p, w.vfl_gamma), log1mp), -w.vfl_alpha);
  nn::Var total =
      g.add(g.mul(g.constant(pos), pos_term), g.mul(g.constant(neg), neg_term));
  return g.sum(total);
}

}  // namespace

nn::Var detect_loss(nn::Graph& g, nn::Var pred_boxes, nn::Var class_logits,
                    const std::vector<GroundTruth>& gts, const LossWeights& w,
                    LossBreakdown* breakdown) {
  const Tensor pb = g.value(pred_boxes);  // detached working copies
  const Tensor cl = g.value(class_logits);
  if (pb.ndim() != 2 || pb.shape[1] != 4)
    throw std::invalid_argument("detect_loss: pred_boxes must be (K,4)");
  if (cl.ndim() != 2 || cl.shape[0] != pb.shape[0])
    throw std::invalid_argument("detect_loss: logits/boxes row mismatch");
  const int k = pb.shape[0], classes = cl.shape[1];
  const int m = static_cast<int>(gts.size());
  const double norm = std::max(1, m);

  // Hungarian assignment on detached values
  std::vector<std::pair<int, int>> assign;
  if (m > 0 && k > 0) {
    Tensor cost({k, m});
    for (int i = 0; i < k; ++i) {
      Prediction p;
      p.box = {pb.at2(i, 0), pb.at2(i, 1), pb.at2(i, 2), pb.at2(i, 3)};
      p.class_logits.assign(cl.data.begin() + static_cast<std::size_t>(i) * classes,
                            cl.data.begin() + static_cast<std::size_t>(i + 1) * classes);
      for (int j = 0; j < m; ++j) cost.at2(i, j) = match_cost(p, gts[j], w.cls, w.l1, w.iou);
    }
    assign = hungarian_match(cost);
  }

  std::vector<std::tuple<int, int, double>> positives;
  nn::Var loss = g.constant(Tensor::scalar(0.0));
  std::vector<double> matched_iou;
  if (!assign.empty()) {
    const int ma = static_cast<int>(assign.size());
    std::vector<std::int64_t> icx, icy, iw_, ih_;
    std::vector<Box> gt_boxes;
    Tensor gt_coords({ma, 4});
    for (int a = 0; a < ma; ++a) {
      const auto [pi, gj] = assign[a];
      icx.push_back(static_cast<std::int64_t>(pi) * 4 + 0);
      icy.push_back(static_cast<std::int64_t>(pi) * 4 + 1);
      iw_.push_back(static_cast<std::int64_t>(pi) * 4 + 2);
      ih_.push_back(static_cast<std::int64_t>(pi) * 4 + 3);
      gt_boxes.push_back(gts[gj].box);
      gt_coords.at2(a, 0) = gts[gj].box.cx;
      gt_coords.at2(a, 1) = gts[gj].box.cy;
      gt_coords.at2(a, 2) = gts[gj].box.w;
      gt_coords.at2(a, 3) = gts[gj].box.h;
      const Box pbox{pb.at2(pi, 0), pb.at2(pi, 1), pb.at2(pi, 2), pb.at2(pi, 3)};
      const double q = iou(pbox, gts[gj].box);
      matched_iou.push_back(q);
      positives.emplace_back(pi, gts[gj].class_id, q);
    }
    nn::Var pcx = g.gather(pred_boxes, icx);
    nn::Var pcy = g.gather(pred_boxes, icy);
    nn::Var pw = g.gather(pred_boxes, iw_);
    nn::Var ph = g.gather(pred_boxes, ih_);
    // L1 over center-form coordinates
    std::vector<std::int64_t> all_idx;
    Tensor all_gt({ma * 4});
    for (int a = 0; a < ma; ++a)
      for (int c = 0; c < 4; ++c) {
        all_idx.push_back(static_cast<std::int64_t>(assign[a].first) * 4 + c);
        all_gt.data[a * 4 + c] = gt_coords.at2(a, c);
      }
    nn::Var l1 = g.sum(g.vabs(g.sub(g.gather(pred_boxes, all_idx), g.constant(all_gt))));
    nn::Var iou_vec = pairwise_iou(g, pcx, pcy, pw, ph, gt_boxes);
    nn::Var iou_term = g.sub(g.constant(Tensor::scalar(static_cast<double>(ma))), g.sum(iou_vec));
    nn::Var box_loss = g.add(g.scale(l1, w.l1), g.scale(iou_term, w.iou));
    if (breakdown) {
      breakdown->box_l1 = g.value(l1).data[0] * w.l1 / norm;
      breakdown->box_iou = g.value(iou_term).data[0] * w.iou / norm;
    }
    loss = g.add(loss, box_loss);
  }

  nn::Var cls_loss = vfl_matrix(g, class_logits, positives, w);
  if (breakdown) {
    breakdown->cls = g.value(cls_loss).data[0] / norm;
    breakdown->assignment = assign;
    breakdown->matched_iou = matched_iou;
  }
  loss = g.scale(g.add(loss, cls_loss), 1.0 / norm);
  if (breakdown) breakdown->total = g.value(loss).data[0];
  return loss;
}

nn::Var selection_loss(nn::Graph& g, nn::Var sel_logits,
                       const std::vector<std::tuple<int, int, double>>& positives, int num_gts,
                       const LossWeights& w) {
  nn::Var l = vfl_matrix(g, sel_logits, positives, w);
  return g.scale(l, 1.0 / std::max(1, num_gts));
}

// ------------------------------------------------------------------ metrics

namespace {

double interpolated_ap(std::vector<char>& tp_flags, int n_gt) {
  // tp_flags is score-ordered; build precision/recall then 101-point AP
  const int n = static_cast<int>(tp_flags.size());
  if (n_gt == 0) return 0.0;
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / (i + 1);
    recall[i] = static_cast<double>(tp) / n_gt;
  }
  // precision envelope from the back
  for (int i = n - 2; i >= 0; --i) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double rec = r / 100.0;
    // first index with recall >= rec
    int lo = 0, hi = n;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (recall[mid] >= rec)
        hi = mid;
      else
        lo = mid + 1;
    }
    ap += lo < n ? precision[lo] : 0.0;
  }
  return ap / 101.0;
}

}  // namespace

MapResult evaluate_map(const std::vector<EvalDetection>& preds,
                       const std::vector<EvalGroundTruth>& gts) {
  std::vector<double> thresholds;
  for (int i = 0; i < 10; ++i) thresholds.push_back(0.5 + 0.05 * i);
  return evaluate_map(preds, gts, thresholds);
}

MapResult evaluate_map(const std::vector<EvalDetection>& preds,
                       const std::vector<EvalGroundTruth>& gts,
                       const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("evaluate_map: no thresholds");

  // classes present in the ground truth
  std::vector<int> classes;
  for (const auto& g : gts)
    if (std::find(classes.begin(), classes.end(), g.class_id) == classes.end())
      classes.push_back(g.class_id);
  std::sort(classes.begin(), classes.end());
  MapResult res;
  if (classes.empty()) return res;

  double sum_map = 0.0, sum50 = 0.0, sum75 = 0.0;
  for (int cls : classes) {
    // score-sorted predictions of this class (stable on insertion order)
    std::vector<int> pidx;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].class_id == cls) pidx.push_back(static_cast<int>(i));
    std::stable_sort(pidx.begin(), pidx.end(),
                     [&](int a, int b) { return preds[a].score > preds[b].score; });
    // ground truths of this class grouped by image
    std::map<int, std::vector<int>> gt_by_image;
    int n_gt = 0;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gts[i].class_id == cls) {
        gt_by_image[gts[i].image_id].push_back(static_cast<int>(i));
        ++n_gt;
      }
    double cls_sum = 0.0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      const double thr = thresholds[ti];
      std::map<int, std::vector<char>> taken;
      for (auto& [img, v] : gt_by_image) taken[img].assign(v.size(), 0);
      std::vector<char> tp_flags(pidx.size(), 0);
      for (std::size_t r = 0; r < pidx.size(); ++r) {
        const auto& p = preds[pidx[r]];
        auto it = gt_by_image.find(p.image_id);
        if (it == gt_by_image.end()) continue;
        double best = 0.0;
        int best_j = -1;
        for (std::size_t j = 0; j < it->second.size(); ++j) {
          if (taken[p.image_id][j]) continue;
          const double v = iou(p.box, gts[it->second[j]].box);
          if (v >= thr && v > best) {
            best = v;
            best_j = static_cast<int>(j);
          }
        }
        if (best_j >= 0) {
          taken[p.image_id][best_j] = 1;
          tp_flags[r] = 1;
        }
      }
      const double ap = interpolated_ap(tp_flags, n_gt);
      cls_sum += ap;
      if (std::fabs(thr - 0.5) < 1e-9) sum50 += ap;
      if (std::fabs(thr - 0.75) < 1e-9) sum75 += ap;
    }
    sum_map += cls_sum / thresholds.size();
  }
  res.map = sum_map / classes.size();
  res.map50 = sum50 / classes.size();
  res.map75 = sum75 / classes.size();
  return res;
}

}  // namespace cvheat::det
