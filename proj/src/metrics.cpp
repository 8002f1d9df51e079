#include "stlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stlm {

double image_score(const ScoreMap& map, int k) {
  if (map.v.empty()) throw std::invalid_argument("image_score: empty map");
  if (k < 1) throw std::invalid_argument("image_score: k must be >= 1");
  if (int64_t(map.v.size()) <= k) {
    double s = 0;
    for (float v : map.v) s += v;
    return s / double(map.v.size());
  }
  std::vector<float> top(map.v.begin(), map.v.end());
  std::nth_element(top.begin(), top.begin() + k, top.end(), std::greater<float>());
  double s = 0;
  for (int i = 0; i < k; ++i) s += top[size_t(i)];
  return s / double(k);
}

namespace {

struct Sweep {
  std::vector<double> uniq;       // descending unique scores
  std::vector<int64_t> tp, fp;    // cumulative counts at score >= uniq[i]
  int64_t pos = 0, neg = 0;
};

Sweep sweep_counts(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("metrics: scores/labels size mismatch");
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  Sweep s;
  for (int l : labels) (l ? s.pos : s.neg) += 1;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    double v = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == v) {
      (labels[idx[i]] ? tp : fp) += 1;
      ++i;
    }
    s.uniq.push_back(v);
    s.tp.push_back(tp);
    s.fp.push_back(fp);
  }
  return s;
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  Sweep s = sweep_counts(scores, labels);
  if (s.pos == 0 || s.neg == 0)
    throw std::invalid_argument("auroc: both classes must be present");
  // trapezoid over the ROC steps; exact integer numerator keeps ties at 1/2
  double area2 = 0;  // twice the unnormalized area
  int64_t tp_prev = 0, fp_prev = 0;
  for (size_t i = 0; i < s.uniq.size(); ++i) {
    area2 += double(s.fp[i] - fp_prev) * double(s.tp[i] + tp_prev);
    tp_prev = s.tp[i];
    fp_prev = s.fp[i];
  }
  return area2 / (2.0 * double(s.pos) * double(s.neg));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  Sweep s = sweep_counts(scores, labels);
  if (s.pos == 0) throw std::invalid_argument("average_precision: no positives");
  double ap = 0;
  int64_t tp_prev = 0;
  for (size_t i = 0; i < s.uniq.size(); ++i) {
    double recall_step = double(s.tp[i] - tp_prev) / double(s.pos);
    double precision = double(s.tp[i]) / double(s.tp[i] + s.fp[i]);
    ap += recall_step * precision;
    tp_prev = s.tp[i];
  }
  return ap;
}

double fnr(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw std::invalid_argument("fnr: no positives");
  return double(c.fn) / double(c.tp + c.fn);
}

int connected_components(const std::vector<uint8_t>& mask, int h, int w, int connectivity,
                         std::vector<int>& labels) {
  if (connectivity != 4 && connectivity != 8)
    throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
  labels.assign(size_t(h) * w, -1);
  int count = 0;
  std::vector<int> stack;
  const int dx4[] = {1, -1, 0, 0}, dy4[] = {0, 0, 1, -1};
  const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1}, dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int* dx = connectivity == 4 ? dx4 : dx8;
  const int* dy = connectivity == 4 ? dy4 : dy8;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int at = y * w + x;
      if (!mask[size_t(at)] || labels[size_t(at)] != -1) continue;
      labels[size_t(at)] = count;
      stack.assign(1, at);
      while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        int cy = cur / w, cx = cur % w;
        for (int d = 0; d < connectivity; ++d) {
          int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          int nat = ny * w + nx;
          if (mask[size_t(nat)] && labels[size_t(nat)] == -1) {
            labels[size_t(nat)] = count;
            stack.push_back(nat);
          }
        }
      }
      ++count;
    }
  return count;
}

namespace {

// Piecewise-linear integration of (fpr, pro) points up to the limit,
// normalized by the limit. Points must be sorted by fpr ascending (the
// sweep produces them that way) and start at (0, 0).
double integrate_pro_curve(const std::vector<std::pair<double, double>>& pts, double limit) {
  double area = 0;
  for (size_t i = 1; i < pts.size(); ++i) {
    auto [x0, y0] = pts[i - 1];
    auto [x1, y1] = pts[i];
    if (x0 >= limit) break;
    if (x1 <= limit) {
      area += (x1 - x0) * (y0 + y1) / 2.0;
    } else {
      double t = (limit - x0) / (x1 - x0);
      double ylim = y0 + t * (y1 - y0);
      area += (limit - x0) * (y0 + ylim) / 2.0;
      break;
    }
  }
  return area / limit;
}

}  // namespace

double mean_region_overlap(const std::vector<ScoreMap>& maps,
                           const std::vector<std::vector<uint8_t>>& masks, double threshold,
                           int connectivity) {
  double sum = 0;
  int64_t regions = 0;
  for (size_t i = 0; i < maps.size(); ++i) {
    std::vector<int> labels;
    int n = connected_components(masks[i], maps[i].h, maps[i].w, connectivity, labels);
    if (n == 0) continue;
    std::vector<int64_t> size(size_t(n), 0), hit(size_t(n), 0);
    for (size_t p = 0; p < labels.size(); ++p) {
      if (labels[p] < 0) continue;
      size[size_t(labels[p])] += 1;
      if (double(maps[i].v[p]) >= threshold) hit[size_t(labels[p])] += 1;
    }
    for (int r = 0; r < n; ++r) sum += double(hit[size_t(r)]) / double(size[size_t(r)]);
    regions += n;
  }
  if (regions == 0) throw std::invalid_argument("pro: no anomalous regions");
  return sum / double(regions);
}

double pro_score(const std::vector<ScoreMap>& maps,
                 const std::vector<std::vector<uint8_t>>& masks, const ProOptions& opt) {
  if (opt.fpr_limit <= 0 || opt.fpr_limit > 1)
    throw std::invalid_argument("pro: fpr_limit must be in (0, 1]");
  if (maps.size() != masks.size())
    throw std::invalid_argument("pro: maps/masks size mismatch");

  // region ids are global across the set; each pixel is either a region
  // member or a negative
  struct Event {
    double score;
    int region;  // -1 = negative pixel
  };
  std::vector<Event> events;
  std::vector<int64_t> region_size;
  int64_t total_neg = 0;
  for (size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].v.size() != masks[i].size())
      throw std::invalid_argument("pro: map/mask size mismatch");
    std::vector<int> labels;
    int n = connected_components(masks[i], maps[i].h, maps[i].w, opt.connectivity, labels);
    int base = int(region_size.size());
    region_size.resize(size_t(base + n), 0);
    for (size_t p = 0; p < labels.size(); ++p) {
      int r = labels[p] >= 0 ? base + labels[p] : -1;
      if (r >= 0) region_size[size_t(r)] += 1;
      else ++total_neg;
      events.push_back({double(maps[i].v[p]), r});
    }
  }
  const int64_t n_regions = int64_t(region_size.size());
  if (n_regions == 0) throw std::invalid_argument("pro: no anomalous regions");

  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.score > b.score; });

  std::vector<int64_t> hit(size_t(n_regions), 0);
  double covered = 0;  // sum over regions of hit/size
  int64_t fp = 0;
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  size_t i = 0;
  while (i < events.size()) {
    double v = events[i].score;
    while (i < events.size() && events[i].score == v) {
      int r = events[i].region;
      if (r < 0) {
        ++fp;
      } else {
        hit[size_t(r)] += 1;
        covered += 1.0 / double(region_size[size_t(r)]);
      }
      ++i;
    }
    double fpr = total_neg > 0 ? double(fp) / double(total_neg) : 1.0;
    pts.emplace_back(fpr, covered / double(n_regions));
  }
  return integrate_pro_curve(pts, opt.fpr_limit);
}

int auto_top_k(int h, int w) {
  int k = int(std::lround(100.0 * double(h) * double(w) / (1024.0 * 1024.0)));
  return std::max(5, k);
}

MetricsReport compute_metrics(const std::vector<std::string>& ids,
                              const std::vector<std::string>& defects,
                              const std::vector<ScoreMap>& maps,
                              const std::vector<std::vector<uint8_t>>& masks,
                              const std::vector<int>& labels, const EvalOptions& opt) {
  const size_t n = ids.size();
  if (defects.size() != n || maps.size() != n || masks.size() != n || labels.size() != n)
    throw std::invalid_argument("compute_metrics: size mismatch");
  if (n == 0) throw std::invalid_argument("compute_metrics: empty test set");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ids[a] < ids[b]; });

  MetricsReport rep;
  rep.top_k = opt.k > 0 ? opt.k : auto_top_k(maps[order[0]].h, maps[order[0]].w);

  std::vector<double> img_scores;
  std::vector<int> img_labels;
  std::vector<double> px_scores;
  std::vector<int> px_labels;
  std::vector<ScoreMap> all_maps;
  std::vector<std::vector<uint8_t>> all_masks;
  for (size_t oi : order) {
    img_scores.push_back(image_score(maps[oi], rep.top_k));
    img_labels.push_back(labels[oi]);
    for (size_t p = 0; p < maps[oi].v.size(); ++p) {
      px_scores.push_back(double(maps[oi].v[p]));
      px_labels.push_back(masks[oi][p] ? 1 : 0);
    }
    all_maps.push_back(maps[oi]);
    all_masks.push_back(masks[oi]);
  }

  rep.image_auroc = auroc(img_scores, img_labels);
  rep.pixel_auroc = auroc(px_scores, px_labels);
  rep.ap = average_precision(px_scores, px_labels);
  rep.pro = pro_score(all_maps, all_masks, {opt.fpr_limit, opt.connectivity});

  // operating point for the miss rate: image-score threshold with maximal
  // Youden J (TPR - FPR), ties resolved toward the higher threshold
  {
    std::vector<double> uniq = img_scores;
    std::sort(uniq.begin(), uniq.end(), std::greater<double>());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    int64_t pos = 0, neg = 0;
    for (int l : img_labels) (l ? pos : neg) += 1;
    double best_j = -2, best_t = uniq.empty() ? 0 : uniq[0];
    for (double t : uniq) {
      int64_t tp = 0, fp = 0;
      for (size_t s = 0; s < img_scores.size(); ++s)
        if (img_scores[s] >= t) (img_labels[s] ? tp : fp) += 1;
      double j = double(tp) / double(pos) - double(fp) / double(neg);
      if (j > best_j) {
        best_j = j;
        best_t = t;
      }
    }
    ConfusionCounts c;
    for (size_t s = 0; s < img_scores.size(); ++s) {
      bool pred = img_scores[s] >= best_t;
      if (img_labels[s]) (pred ? c.tp : c.fn) += 1;
      else (pred ? c.fp : c.tn) += 1;
    }
    rep.fnr = fnr(c);
  }

  // per-defect breakdown: each defect against all good images
  std::vector<size_t> good_idx;
  std::map<std::string, std::vector<size_t>> by_defect;
  for (size_t oi : order) {
    if (labels[oi]) by_defect[defects[oi]].push_back(oi);
    else good_idx.push_back(oi);
  }
  for (auto& [defect, bad_idx] : by_defect) {
    ClassMetrics cm;
    cm.n_images = int(bad_idx.size() + good_idx.size());
    std::vector<double> is, ps;
    std::vector<int> il, pl;
    std::vector<ScoreMap> ms;
    std::vector<std::vector<uint8_t>> ks;
    auto add = [&](size_t oi) {
      is.push_back(image_score(maps[oi], rep.top_k));
      il.push_back(labels[oi]);
      for (size_t p = 0; p < maps[oi].v.size(); ++p) {
        ps.push_back(double(maps[oi].v[p]));
        pl.push_back(masks[oi][p] ? 1 : 0);
      }
      ms.push_back(maps[oi]);
      ks.push_back(masks[oi]);
    };
    for (size_t oi : good_idx) add(oi);
    for (size_t oi : bad_idx) add(oi);
    cm.image_auroc = good_idx.empty() ? 1.0 : auroc(is, il);
    cm.pixel_auroc = auroc(ps, pl);
    cm.ap = average_precision(ps, pl);
    cm.pro = pro_score(ms, ks, {opt.fpr_limit, opt.connectivity});
    rep.per_class[defect] = cm;
  }
  return rep;
}

}  // namespace stlm
