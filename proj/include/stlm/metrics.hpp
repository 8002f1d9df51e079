#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace stlm {

struct ScoreMap {
  int h = 0, w = 0;
  std::vector<float> v;
};

// Mean of the k largest pixel scores; all pixels when the map is smaller.
double image_score(const ScoreMap& map, int k);

// P(score+ > score-) + 0.5 * P(tie), via a grouped threshold sweep with
// trapezoidal integration. Throws if only one class is present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Step-interpolated area under the precision-recall curve over descending
// unique thresholds. Throws without positives.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

struct ConfusionCounts {
  int64_t tp = 0, fn = 0, fp = 0, tn = 0;
};

// FN / (TP + FN)
double fnr(const ConfusionCounts& c);

// 8- or 4-connected component labeling; returns the component count and
// fills labels with ids (-1 for background).
int connected_components(const std::vector<uint8_t>& mask, int h, int w, int connectivity,
                         std::vector<int>& labels);

struct ProOptions {
  double fpr_limit = 0.3;
  int connectivity = 8;
};

// Per-region overlap: mean coverage of each connected ground-truth region
// against the global FPR, integrated by trapezoid up to fpr_limit and
// normalized by it. Regions of any size carry equal weight.
double pro_score(const std::vector<ScoreMap>& maps,
                 const std::vector<std::vector<uint8_t>>& masks, const ProOptions& opt = {});

// Mean per-region coverage of a fixed binary prediction (one sweep point).
double mean_region_overlap(const std::vector<ScoreMap>& maps,
                           const std::vector<std::vector<uint8_t>>& masks, double threshold,
                           int connectivity = 8);

struct ClassMetrics {
  double image_auroc = 0, pixel_auroc = 0, pro = 0, ap = 0;
  int n_images = 0;
};

struct MetricsReport {
  double image_auroc = 0, pixel_auroc = 0, pro = 0, ap = 0, fnr = 0;
  std::map<std::string, ClassMetrics> per_class;
  int top_k = 0;
  uint64_t seed = 0;
  std::string config_digest;
};

struct EvalOptions {
  int k = 0;  // 0 = scale the top-100-at-1024^2 density to the map size
  double fpr_limit = 0.3;
  int connectivity = 8;
  int jobs = 1;
};

int auto_top_k(int h, int w);

// Metric aggregation over per-image results; maps/masks/labels are index-
// aligned with ids, and results are reduced after sorting by sample id.
MetricsReport compute_metrics(const std::vector<std::string>& ids,
                              const std::vector<std::string>& defects,
                              const std::vector<ScoreMap>& maps,
                              const std::vector<std::vector<uint8_t>>& masks,
                              const std::vector<int>& labels, const EvalOptions& opt);

}  // namespace stlm
