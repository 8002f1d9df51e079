#include "stlm/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "stlm/checkpoint.hpp"

namespace stlm {

namespace fs = std::filesystem;

const char* stage_mode_name(StageMode m) {
  return m == StageMode::OneStage ? "one_stage" : "two_stage";
}

StageMode stage_mode_from_name(const std::string& s) {
  if (s == "one_stage") return StageMode::OneStage;
  if (s == "two_stage") return StageMode::TwoStage;
  throw std::invalid_argument("unknown stage_mode: " + s);
}

void TrainConfig::validate() const {
  if (adam_lr <= 0 || sgd_lr <= 0) throw std::invalid_argument("learning rates must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
}

template <class T>
StepLosses<T> build_step_losses(Model<T>& model, Graph<T>& g, Binder<T>& b,
                                const std::vector<TrainingPair>& batch, int stage) {
  const ModelConfig& cfg = model.config();
  const bool distill = stage != 2 && cfg.use_teacher;
  const bool fa = stage != 1;
  const T inv_b = T(1) / T(batch.size());

  StepLosses<T> out;
  auto acc = [&](Tensor<T>& dst, Tensor<T> term) {
    dst = dst.valid() ? add(dst, term) : term;
  };

  for (const auto& pair : batch) {
    auto x_cor = image_tensor(g, pair.corrupted.image);

    Pyramid<T> s_plain = cfg.use_plain_stream
                             ? model.forward_stream(g, b, Stream::Plain, x_cor)
                             : model.forward_stream(g, b, Stream::Teacher, x_cor);
    Pyramid<T> s_den = model.forward_stream(g, b, Stream::Denoising, x_cor);

    if (distill) {
      Pyramid<T> t_cor = model.forward_stream(g, b, Stream::Teacher, x_cor);
      Pyramid<T> t_clean = t_cor;
      if (pair.corrupted.label != 0) {
        auto x_clean = image_tensor(g, pair.clean.image);
        t_clean = model.forward_stream(g, b, Stream::Teacher, x_clean);
      }
      // plain stream chases the teacher on the corrupted view, the denoising
      // stream chases the teacher on the clean view
      Pyramid<T>& plain_target = cfg.alt_teacher_assignment ? t_clean : t_cor;
      Pyramid<T>& den_target = cfg.alt_teacher_assignment ? t_cor : t_clean;
      if (cfg.distill_mode == DistillMode::Feature) {
        if (cfg.use_plain_stream)
          acc(out.l_p, cosine_distill_loss(plain_target, s_plain, cfg.layers_used));
        acc(out.l_de, cosine_distill_loss(den_target, s_den, cfg.layers_used));
      } else {
        auto t_cor_map = model.mask_head(g, b, Stream::Teacher, plain_target);
        auto t_clean_map = model.mask_head(g, b, Stream::Teacher, den_target);
        if (cfg.use_plain_stream) {
          auto p_map = model.mask_head(g, b, Stream::Plain, s_plain);
          acc(out.l_p, logit_distill_loss(g, t_cor_map, p_map));
        }
        auto d_map = model.mask_head(g, b, Stream::Denoising, s_den);
        acc(out.l_de, logit_distill_loss(g, t_clean_map, d_map));
      }
    }

    if (fa) {
      auto xhat = model.fa_input(g, s_plain, s_den);
      auto map = model.fa_forward(g, b, xhat);
      auto m = mask_tensor<T>(g, pair.corrupted.mask, pair.corrupted.image.h,
                              pair.corrupted.image.w);
      acc(out.l_focal, focal_loss(m, map));
      acc(out.l_l1, l1_loss(m, map));
    }
  }

  if (out.l_p.valid()) out.l_p = mul_scalar(out.l_p, inv_b);
  if (out.l_de.valid()) out.l_de = mul_scalar(out.l_de, inv_b);
  if (out.l_focal.valid()) out.l_focal = mul_scalar(out.l_focal, inv_b);
  if (out.l_l1.valid()) out.l_l1 = mul_scalar(out.l_l1, inv_b);
  out.l_total = total_loss(g, out.l_p, out.l_de, out.l_focal, out.l_l1);
  return out;
}

template <class T>
LossBundle train_step(Model<T>& model, const std::vector<TrainingPair>& batch, int stage,
                      Adam<T>& adam, SgdMomentum<T>& sgd, const TrainConfig& tc) {
  for (const auto& p : model.registry().all()) p->zero_grad();

  Graph<T> g;
  Binder<T> b(g);
  auto losses = build_step_losses(model, g, b, batch, stage);

  LossBundle lb;
  lb.l_p = losses.l_p.valid() ? double(losses.l_p.item()) : 0.0;
  lb.l_de = losses.l_de.valid() ? double(losses.l_de.item()) : 0.0;
  lb.l_focal = losses.l_focal.valid() ? double(losses.l_focal.item()) : 0.0;
  lb.l_l1 = losses.l_l1.valid() ? double(losses.l_l1.item()) : 0.0;
  lb.l_total = double(losses.l_total.item());
  if (!std::isfinite(lb.l_total)) throw NumericError("non-finite total loss");

  g.backward(losses.l_total);
  b.pull_grads();

  auto tlm = model.tlm_params();
  auto fap = model.fa_params();
  if (tc.grad_clip) {
    std::vector<Parameter<T>*> all = tlm;
    all.insert(all.end(), fap.begin(), fap.end());
    clip_global_norm(all, tc.grad_clip_norm);
  }
  if (stage != 2 && !tlm.empty()) adam.step(tlm);
  if (stage != 1 && !fap.empty()) sgd.step(fap);
  return lb;
}

std::vector<NamedTensor> training_state_tensors(Model<float>& model, Adam<float>& adam,
                                                SgdMomentum<float>& sgd, int64_t step) {
  auto tensors = model.export_params();
  auto adam_state = adam.snapshot();
  for (auto& [name, mv] : adam_state) {
    auto* p = model.registry().find(name);
    if (!p) continue;
    tensors.push_back({"opt.adam.m." + name, p->shape, mv.first});
    tensors.push_back({"opt.adam.v." + name, p->shape, mv.second});
  }
  for (auto& [name, vel] : sgd.snapshot()) {
    auto* p = model.registry().find(name);
    if (!p) continue;
    tensors.push_back({"opt.sgd.v." + name, p->shape, vel});
  }
  tensors.push_back({"opt.adam.t", {1}, {float(adam.steps())}});
  tensors.push_back({"opt.step", {1}, {float(step)}});
  return tensors;
}

namespace {

int64_t restore_training_state(const std::string& path, Model<float>& model,
                               Adam<float>& adam, SgdMomentum<float>& sgd) {
  auto tensors = load_checkpoint(path);
  model.import_params(tensors, /*inference_only=*/false);
  int64_t step = 0;
  for (auto& t : tensors) {
    if (t.name == "opt.step") step = int64_t(t.data.at(0));
    if (t.name == "opt.adam.t") adam.set_steps(int64_t(t.data.at(0)));
    if (t.name.rfind("opt.adam.m.", 0) == 0) {
      std::string pname = t.name.substr(11);
      for (auto& t2 : tensors)
        if (t2.name == "opt.adam.v." + pname) adam.restore(pname, t.data, t2.data);
    }
    if (t.name.rfind("opt.sgd.v.", 0) == 0) sgd.restore(t.name.substr(10), t.data);
  }
  return step;
}

}  // namespace

TrainResult train(Model<float>& model, const Dataset& ds, const TrainConfig& tc,
                  const AnomalySpec& aspec, const PerlinParams& pp,
                  const std::string& out_dir, const std::string& resume_from,
                  const StepCallback& cb) {
  tc.validate();
  if (ds.train.empty()) throw std::invalid_argument("train: dataset has no training images");

  Adam<float> adam(tc.adam_lr, tc.adam_beta1, tc.adam_beta2);
  SgdMomentum<float> sgd(tc.sgd_lr, tc.sgd_momentum);

  int64_t step = 0;
  if (!resume_from.empty()) step = restore_training_state(resume_from, model, adam, sgd);

  const bool two_stage = tc.stage_mode == StageMode::TwoStage;
  const int stage1_epochs = two_stage ? tc.epochs / 2 : tc.epochs;

  std::ofstream log1, log2;
  auto open_log = [&](std::ofstream& f, const std::string& name) {
    if (out_dir.empty()) return;
    f.open(fs::path(out_dir) / name, std::ios::trunc);
    f << "step,l_p,l_de,l_focal,l_l1,l_total\n";
  };
  open_log(log1, two_stage ? "loss_stage1.csv" : "loss.csv");
  if (two_stage) open_log(log2, "loss_stage2.csv");

  // two-stage phase 2 freezes the TLM; remember which parameters to restore
  std::vector<Parameter<float>*> frozen;

  TrainResult result;
  uint64_t draw_counter = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const int stage = !two_stage ? 0 : (epoch < stage1_epochs ? 1 : 2);
    if (two_stage && epoch == stage1_epochs) {
      for (auto* p : model.tlm_params()) {
        p->trainable = false;
        frozen.push_back(p);
      }
    }

    std::vector<int> order(ds.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    Rng erng = Rng::for_index(tc.seed, 0x1000 + uint64_t(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(erng.uniform_int(0, int64_t(i) - 1))]);

    for (size_t pos = 0; pos < order.size(); pos += size_t(tc.batch_size)) {
      std::vector<TrainingPair> batch;
      std::vector<uint64_t> seeds;
      for (size_t j = pos; j < std::min(pos + size_t(tc.batch_size), order.size()); ++j) {
        uint64_t s = hash_combine(tc.seed, draw_counter++);
        seeds.push_back(s);
        batch.push_back(sample_training_pair(ds.train[size_t(order[j])], aspec, pp, s));
      }
      LossBundle lb;
      try {
        lb = train_step(model, batch, stage, adam, sgd, tc);
      } catch (const NumericError& e) {
        std::string info = "batch seeds:";
        for (uint64_t s : seeds) info += " " + std::to_string(s);
        throw NumericError(std::string(e.what()) + " at step " + std::to_string(step) +
                           " (" + info + ")");
      }
      if (result.steps == 0) result.first = lb;
      result.last = lb;
      ++result.steps;
      ++step;

      std::ofstream& log = (two_stage && stage == 2) ? log2 : log1;
      if (log.is_open())
        log << step << "," << lb.l_p << "," << lb.l_de << "," << lb.l_focal << ","
            << lb.l_l1 << "," << lb.l_total << "\n";
      if (cb) cb(int(step), stage, lb);

      if (!out_dir.empty() && tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0)
        save_checkpoint(
            (fs::path(out_dir) / ("checkpoint_step" + std::to_string(step) + ".stlmckpt"))
                .string(),
            training_state_tensors(model, adam, sgd, step));
    }
  }

  for (auto* p : frozen) p->trainable = true;

  if (!out_dir.empty())
    save_checkpoint((fs::path(out_dir) / "checkpoint.stlmckpt").string(),
                    training_state_tensors(model, adam, sgd, step));
  return result;
}

template StepLosses<float> build_step_losses<float>(Model<float>&, Graph<float>&,
                                                    Binder<float>&,
                                                    const std::vector<TrainingPair>&, int);
template StepLosses<double> build_step_losses<double>(Model<double>&, Graph<double>&,
                                                      Binder<double>&,
                                                      const std::vector<TrainingPair>&, int);
template LossBundle train_step<float>(Model<float>&, const std::vector<TrainingPair>&, int,
                                      Adam<float>&, SgdMomentum<float>&, const TrainConfig&);

}  // namespace stlm
