#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stlm/checkpoint.hpp"
#include "stlm/train.hpp"

using namespace stlm;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.image_channels = 1;
  cfg.patch_size = 8;
  cfg.student_dim = 8;
  cfg.teacher_dim = 12;
  cfg.encoder_depth = 1;
  cfg.teacher_depth = 2;
  cfg.heads = 2;
  cfg.fa_channels = 8;
  cfg.query_tokens = 2;
  return cfg;
}

Dataset tiny_dataset(uint64_t seed, int n_train = 4) {
  return make_synthetic_dataset(SynthClass::Stripes, n_train, 2, 2, seed, 1, 16);
}

PerlinParams tiny_perlin() {
  PerlinParams pp;
  pp.period_min = 4;
  pp.period_max = 8;
  return pp;
}

TrainConfig quick_train(int epochs = 1) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 2;
  tc.seed = 5;
  return tc;
}

void copy_params(Model<float>& m, const std::string& from_prefix,
                 const std::string& to_prefix) {
  for (const auto& p : m.registry().all()) {
    if (p->name.rfind(from_prefix, 0) != 0) continue;
    auto* dst = m.registry().find(to_prefix + p->name.substr(from_prefix.size()));
    REQUIRE(dst != nullptr);
    dst->value = p->value;
  }
}

}  // namespace

TEST_CASE("clean draw with identical students gives l_de == l_p") {
  Model<float> model(tiny_config(), 3);
  copy_params(model, "plain.enc.", "denoise.enc.");
  auto ds = tiny_dataset(1);
  TrainingPair pair;
  pair.clean = ds.train[0];
  pair.corrupted = ds.train[0];  // probability-0 draw: corrupted equals clean
  Graph<float> g;
  Binder<float> b(g);
  auto losses = build_step_losses(model, g, b, {pair}, 0);
  CHECK(losses.l_p.item() == doctest::Approx(losses.l_de.item()).epsilon(1e-6));
  CHECK(losses.l_total.item() ==
        doctest::Approx(losses.l_p.item() + losses.l_de.item() + losses.l_focal.item() +
                        losses.l_l1.item())
            .epsilon(1e-6));
}

TEST_CASE("one train step updates every trainable component") {
  Model<float> model(tiny_config(), 3);
  auto ds = tiny_dataset(1);
  AnomalySpec aspec;
  aspec.activation_prob = 1.0;
  auto pair = sample_training_pair(ds.train[0], aspec, tiny_perlin(), 99);

  std::map<std::string, uint64_t> before;
  for (const char* prefix : {"plain.", "denoise.", "decoder.", "fa."})
    before[prefix] = model.checksum(prefix);
  uint64_t teacher_before = model.checksum("teacher.");
  uint64_t tproj_before = model.checksum("tproj.");

  Adam<float> adam(5e-4);
  SgdMomentum<float> sgd(1e-2, 0.9);
  auto lb = train_step(model, {pair}, 0, adam, sgd, quick_train());
  CHECK(std::isfinite(lb.l_total));

  for (auto& [prefix, sum] : before) CHECK(model.checksum(prefix) != sum);
  // the whole teacher-target path is frozen, projection included
  CHECK(model.checksum("teacher.") == teacher_before);
  CHECK(model.checksum("tproj.") == tproj_before);
}

TEST_CASE("gradients reach the encoders through the FA head alone") {
  Model<float> model(tiny_config(), 3);
  auto ds = tiny_dataset(1);
  AnomalySpec aspec;
  aspec.activation_prob = 1.0;
  auto pair = sample_training_pair(ds.train[0], aspec, tiny_perlin(), 99);

  for (const auto& p : model.registry().all()) p->zero_grad();
  Graph<float> g;
  Binder<float> b(g);
  // stage 2 wiring drops the distillation losses; only focal+l1 remain
  auto losses = build_step_losses(model, g, b, {pair}, 2);
  CHECK_FALSE(losses.l_p.valid());
  g.backward(losses.l_total);
  b.pull_grads();
  double enc_norm = 0;
  for (const auto& p : model.registry().all())
    if (p->name.rfind("plain.enc.", 0) == 0 || p->name.rfind("denoise.enc.", 0) == 0)
      for (float gv : p->grad) enc_norm += double(gv) * gv;
  CHECK(enc_norm > 0.0);
}

TEST_CASE("l_total stays finite over 100 random steps") {
  Model<float> model(tiny_config(), 4);
  auto ds = tiny_dataset(2);
  AnomalySpec aspec;
  Adam<float> adam(5e-4);
  SgdMomentum<float> sgd(1e-2, 0.9);
  auto tc = quick_train();
  for (int step = 0; step < 100; ++step) {
    auto pair =
        sample_training_pair(ds.train[size_t(step) % ds.train.size()], aspec, tiny_perlin(),
                             hash_combine(77, uint64_t(step)));
    auto lb = train_step(model, {pair}, 0, adam, sgd, tc);
    CHECK(std::isfinite(lb.l_total));
  }
}

TEST_CASE("full train run: loss log rows equal steps, checkpoints written") {
  auto dir = fs::temp_directory_path() / "stlm_train_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Model<float> model(tiny_config(), 5);
  auto ds = tiny_dataset(3);
  auto tc = quick_train(2);
  tc.checkpoint_every = 3;
  auto res = train(model, ds, tc, AnomalySpec{}, tiny_perlin(), dir.string());
  CHECK(res.steps == 2 * 2);  // 4 train images / batch 2 * 2 epochs

  std::ifstream log(dir / "loss.csv");
  std::string line;
  int rows = -1;  // header
  while (std::getline(log, line))
    if (!line.empty()) ++rows;
  CHECK(rows == res.steps);
  CHECK(fs::exists(dir / "checkpoint.stlmckpt"));
  CHECK(fs::exists(dir / "checkpoint_step3.stlmckpt"));
  fs::remove_all(dir);
}

TEST_CASE("two-stage: stage 2 leaves the TLM untouched and writes two logs") {
  auto dir = fs::temp_directory_path() / "stlm_train_2stage";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Model<float> model(tiny_config(), 6);
  auto ds = tiny_dataset(4);
  auto tc = quick_train(2);
  tc.stage_mode = StageMode::TwoStage;

  uint64_t tlm_after_stage1 = 0;
  bool captured = false;
  auto res = train(model, ds, tc, AnomalySpec{}, tiny_perlin(), dir.string(), "",
                   [&](int, int stage, const LossBundle&) {
                     if (stage == 2 && !captured) {
                       captured = true;
                       tlm_after_stage1 = model.checksum("plain.") ^
                                          model.checksum("denoise.") ^
                                          model.checksum("decoder.");
                     }
                   });
  CHECK(res.steps == 4);
  REQUIRE(captured);
  CHECK((model.checksum("plain.") ^ model.checksum("denoise.") ^
         model.checksum("decoder.")) == tlm_after_stage1);
  CHECK(fs::exists(dir / "loss_stage1.csv"));
  CHECK(fs::exists(dir / "loss_stage2.csv"));
  fs::remove_all(dir);
}

TEST_CASE("training is deterministic: same seed, same checkpoint digest") {
  auto run = [](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    Model<float> model(tiny_config(), 7);
    auto ds = tiny_dataset(5);
    train(model, ds, quick_train(2), AnomalySpec{}, tiny_perlin(), dir.string());
    return file_digest((dir / "checkpoint.stlmckpt").string());
  };
  auto d1 = run(fs::temp_directory_path() / "stlm_det_a");
  auto d2 = run(fs::temp_directory_path() / "stlm_det_b");
  CHECK(d1 == d2);
  fs::remove_all(fs::temp_directory_path() / "stlm_det_a");
  fs::remove_all(fs::temp_directory_path() / "stlm_det_b");
}

TEST_CASE("resume continues the step counter") {
  auto dir = fs::temp_directory_path() / "stlm_resume";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Model<float> model(tiny_config(), 8);
  auto ds = tiny_dataset(6);
  train(model, ds, quick_train(1), AnomalySpec{}, tiny_perlin(), dir.string());
  auto tensors = load_checkpoint((dir / "checkpoint.stlmckpt").string());
  float step_before = 0;
  for (auto& t : tensors)
    if (t.name == "opt.step") step_before = t.data[0];
  CHECK(step_before == 2.f);

  Model<float> model2(tiny_config(), 9);
  auto dir2 = fs::temp_directory_path() / "stlm_resume2";
  fs::remove_all(dir2);
  fs::create_directories(dir2);
  train(model2, ds, quick_train(1), AnomalySpec{}, tiny_perlin(), dir2.string(),
        (dir / "checkpoint.stlmckpt").string());
  auto tensors2 = load_checkpoint((dir2 / "checkpoint.stlmckpt").string());
  float step_after = 0;
  for (auto& t : tensors2)
    if (t.name == "opt.step") step_after = t.data[0];
  CHECK(step_after == 4.f);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("ablated wirings build and train one step") {
  auto ds = tiny_dataset(7);
  AnomalySpec aspec;
  aspec.activation_prob = 1.0;
  auto pair = sample_training_pair(ds.train[0], aspec, tiny_perlin(), 42);
  auto tc = quick_train();

  for (auto mutate : std::vector<std::function<void(ModelConfig&)>>{
           [](ModelConfig& c) { c.use_teacher = false; },
           [](ModelConfig& c) { c.use_plain_stream = false; },
           [](ModelConfig& c) { c.shared_decoder = false; },
           [](ModelConfig& c) { c.distill_mode = DistillMode::Logit; },
           [](ModelConfig& c) { c.layers_used = {2}; },
           [](ModelConfig& c) { c.fa_input_mode = FaInputMode::ResidualConcat; },
           [](ModelConfig& c) { c.fa_input_mode = FaInputMode::Concat; },
       }) {
    auto cfg = tiny_config();
    mutate(cfg);
    Model<float> model(cfg, 11);
    Adam<float> adam(5e-4);
    SgdMomentum<float> sgd(1e-2, 0.9);
    auto lb = train_step(model, {pair}, 0, adam, sgd, tc);
    CHECK(std::isfinite(lb.l_total));
    if (!cfg.use_teacher) {
      CHECK(lb.l_p == 0.0);
      CHECK(lb.l_de == 0.0);
      CHECK(lb.l_focal + lb.l_l1 == doctest::Approx(lb.l_total));
    }
    if (!cfg.use_plain_stream) CHECK(lb.l_p == 0.0);
  }
}
