#pragma once

#include <functional>
#include <optional>
#include <string>

#include "stlm/losses.hpp"
#include "stlm/model.hpp"
#include "stlm/optim.hpp"
#include "stlm/synth.hpp"

namespace stlm {

enum class StageMode { OneStage, TwoStage };

const char* stage_mode_name(StageMode m);
StageMode stage_mode_from_name(const std::string& s);

struct TrainConfig {
  double adam_lr = 5e-4;
  double adam_beta1 = 0.9, adam_beta2 = 0.999;
  double sgd_lr = 1e-2;
  double sgd_momentum = 0.9;
  int epochs = 48;
  int batch_size = 2;
  uint64_t seed = 0;
  StageMode stage_mode = StageMode::OneStage;
  int checkpoint_every = 0;  // steps between checkpoints; 0 = final only
  double grad_clip_norm = 10.0;
  bool grad_clip = true;

  void validate() const;
};

template <class T>
Tensor<T> image_tensor(Graph<T>& g, const Image& img) {
  std::vector<T> v(img.v.begin(), img.v.end());
  return g.constant({img.c, img.h, img.w}, std::move(v));
}

template <class T>
Tensor<T> mask_tensor(Graph<T>& g, const std::vector<uint8_t>& mask, int h, int w) {
  std::vector<T> v(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) v[i] = T(mask[i]);
  return g.constant({h, w}, std::move(v));
}

// Builds the full training objective for one batch on the given graph.
// stage: 0 = joint, 1 = distillation only, 2 = segmentation head only.
template <class T>
struct StepLosses {
  Tensor<T> l_p, l_de, l_focal, l_l1, l_total;
};

template <class T>
StepLosses<T> build_step_losses(Model<T>& model, Graph<T>& g, Binder<T>& b,
                                const std::vector<TrainingPair>& batch, int stage);

// One optimization step: forward, one backward pass of l_total, Adam on the
// two-stream model, SGD on the FA head. The teacher receives no update.
template <class T>
LossBundle train_step(Model<T>& model, const std::vector<TrainingPair>& batch, int stage,
                      Adam<T>& adam, SgdMomentum<T>& sgd, const TrainConfig& tc);

struct TrainResult {
  LossBundle first, last;
  int steps = 0;
};

using StepCallback = std::function<void(int step, int stage, const LossBundle&)>;

// Full training run with on-the-fly pseudo-anomaly pairs. When out_dir is
// nonempty, writes loss CSV logs and checkpoints there.
TrainResult train(Model<float>& model, const Dataset& ds, const TrainConfig& tc,
                  const AnomalySpec& aspec, const PerlinParams& pp,
                  const std::string& out_dir, const std::string& resume_from = "",
                  const StepCallback& cb = nullptr);

// Checkpoint payload incl. optimizer state, for exact resumption.
std::vector<NamedTensor> training_state_tensors(Model<float>& model, Adam<float>& adam,
                                                SgdMomentum<float>& sgd, int64_t step);

}  // namespace stlm
