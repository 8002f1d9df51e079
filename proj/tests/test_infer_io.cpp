// Inference surfaces, file formats, dataset IO and config parsing.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "stlm/commands.hpp"
#include "stlm/dataset_io.hpp"
#include "stlm/infer.hpp"
#include "stlm/png_io.hpp"

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

}  // namespace

TEST_CASE("raw map format round-trips and the magic is exact") {
  auto path = (fs::temp_directory_path() / "stlm_map.stlmmap").string();
  ScoreMap m{2, 3, {0.f, 0.25f, 0.5f, 0.75f, 1.f, 0.125f}};
  write_map_raw(path, m);
  std::ifstream is(path, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  CHECK(std::memcmp(magic, "STLMMAP0", 8) == 0);
  uint32_t h, w;
  is.read(reinterpret_cast<char*>(&h), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  CHECK(h == 2);
  CHECK(w == 3);
  auto back = read_map_raw(path);
  CHECK(back.v == m.v);
  fs::remove(path);
}

TEST_CASE("png round trip for images and 16-bit maps") {
  auto dir = fs::temp_directory_path() / "stlm_png";
  fs::create_directories(dir);
  Image img(3, 9, 7);
  Rng rng(1);
  for (auto& v : img.v) v = float(rng.uniform());
  auto p = (dir / "img.png").string();
  write_png(p, img);
  auto back = read_png(p);
  CHECK(back.c == 3);
  CHECK(back.h == 9);
  CHECK(back.w == 7);
  for (size_t i = 0; i < img.v.size(); ++i)
    CHECK(back.v[i] == doctest::Approx(img.v[i]).epsilon(0.01));

  std::vector<float> scores(16 * 16);
  for (auto& v : scores) v = float(rng.uniform());
  write_png_gray16((dir / "map.png").string(), scores, 16, 16);
  CHECK(fs::file_size(dir / "map.png") > 0);
  fs::remove_all(dir);
}

TEST_CASE("dataset write/read round trip preserves layout and masks") {
  auto dir = fs::temp_directory_path() / "stlm_ds";
  fs::remove_all(dir);
  auto ds = make_synthetic_dataset(SynthClass::Checker, 3, 2, 2, 5, 3, 32);
  write_dataset(dir.string(), ds);
  CHECK(fs::exists(dir / "train" / "good" / "000.png"));
  CHECK(fs::exists(dir / "test" / "good" / "000.png"));
  CHECK(fs::exists(dir / "test" / "blend" / "000.png"));
  CHECK(fs::exists(dir / "ground_truth" / "blend" / "000_mask.png"));

  auto back = read_dataset(dir.string());
  CHECK(back.train.size() == 3);
  CHECK(back.test.size() == 4);
  int bad = 0;
  for (const auto& s : back.test)
    if (s.label) {
      ++bad;
      CHECK(s.mask_nonempty());
    }
  CHECK(bad == 2);
  // masks survive the round trip exactly (readback order sorts defect dirs)
  for (const auto& orig : ds.test) {
    auto it = std::find_if(back.test.begin(), back.test.end(),
                           [&](const ImageSample& s) { return s.id == orig.id; });
    REQUIRE(it != back.test.end());
    CHECK(it->mask == orig.mask);
  }
  fs::remove_all(dir);
}

TEST_CASE("inference: shape, range, determinism") {
  Model<float> model(tiny_config(), 4);
  Image img(1, 16, 16);
  Rng rng(2);
  for (auto& v : img.v) v = float(rng.uniform());
  auto m1 = infer_one(model, img);
  auto m2 = infer_one(model, img);
  CHECK(m1.h == 16);
  CHECK(m1.w == 16);
  for (float v : m1.v) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
  CHECK(std::memcmp(m1.v.data(), m2.v.data(), m1.v.size() * sizeof(float)) == 0);
}

TEST_CASE("evaluate succeeds on a checkpoint stripped of teacher tensors") {
  auto dir = fs::temp_directory_path() / "stlm_teacherfree";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Model<float> model(tiny_config(), 4);
  auto ds = make_synthetic_dataset(SynthClass::Stripes, 4, 2, 2, 6, 1, 16);
  PerlinParams pp;
  pp.period_min = 4;
  pp.period_max = 8;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.seed = 3;
  train(model, ds, tc, AnomalySpec{}, pp, dir.string());

  auto tensors = load_checkpoint((dir / "checkpoint.stlmckpt").string());
  auto full = tensors;
  tensors.erase(std::remove_if(tensors.begin(), tensors.end(),
                               [](const NamedTensor& t) {
                                 return t.name.rfind("teacher.", 0) == 0 ||
                                        t.name.rfind("tproj.", 0) == 0 ||
                                        t.name.rfind("opt.", 0) == 0;
                               }),
                tensors.end());
  CHECK(tensors.size() < full.size());

  Model<float> stripped(tiny_config(), 99);
  stripped.import_params(tensors, true);
  EvalOptions opt;
  auto rep = evaluate(stripped, ds, opt);
  CHECK(rep.pixel_auroc >= 0.0);
  CHECK(rep.pixel_auroc <= 1.0);

  // identical metrics with and without the teacher tensors present
  Model<float> fullm(tiny_config(), 98);
  fullm.import_params(full, true);
  auto rep_full = evaluate(fullm, ds, opt);
  CHECK(rep.pixel_auroc == rep_full.pixel_auroc);
  CHECK(rep.image_auroc == rep_full.image_auroc);
  fs::remove_all(dir);
}

TEST_CASE("evaluate with no anomalous test images fails fast") {
  Model<float> model(tiny_config(), 4);
  auto ds = make_synthetic_dataset(SynthClass::Stripes, 2, 2, 1, 6, 1, 16);
  ds.test.pop_back();  // drop the single bad sample
  EvalOptions opt;
  CHECK_THROWS(evaluate(model, ds, opt));
}

TEST_CASE("parallel evaluation matches single-job evaluation") {
  Model<float> model(tiny_config(), 4);
  auto ds = make_synthetic_dataset(SynthClass::Stripes, 2, 2, 2, 6, 1, 16);
  EvalOptions opt1, opt4;
  opt4.jobs = 4;
  auto r1 = evaluate(model, ds, opt1);
  auto r4 = evaluate(model, ds, opt4);
  CHECK(r1.pixel_auroc == r4.pixel_auroc);
  CHECK(r1.image_auroc == r4.image_auroc);
  CHECK(r1.pro == r4.pro);
}

TEST_CASE("config: defaults, overrides, unknown keys, env seed") {
  auto dir = fs::temp_directory_path() / "stlm_cfg";
  fs::create_directories(dir);
  auto path = (dir / "config.json").string();
  {
    std::ofstream os(path);
    os << R"({"seed": 9, "model": {"image_size": 32, "patch_size": 8}})";
  }
  auto cfg = load_config_file(path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.model.image_size == 32);
  CHECK(cfg.model.student_dim == 64);  // default

  auto cfg2 = load_config_file(path, {{"train.adam_lr", "0.001"},
                                      {"model.layers_used", "[2]"},
                                      {"data.class_kind", "blobs"}});
  CHECK(cfg2.train.adam_lr == doctest::Approx(0.001));
  CHECK(cfg2.model.layers_used == std::vector<int>{2});
  CHECK(cfg2.data.class_kind == "blobs");

  {
    std::ofstream os(path);
    os << R"({"model": {"patch_sizee": 8}})";
  }
  CHECK_THROWS_WITH_AS(load_config_file(path), doctest::Contains("patch_sizee"),
                       ConfigError);

  {
    std::ofstream os(path);
    os << R"({"model": {"patch_size": 7, "image_size": 32}})";
  }
  CHECK_THROWS_AS(load_config_file(path), ConfigError);

  {
    std::ofstream os(path);
    os << R"({"seed": 3})";
  }
  setenv("STLM_SEED", "1234", 1);
  auto cfg3 = load_config_file(path);
  CHECK(cfg3.seed == 1234);
  unsetenv("STLM_SEED");
  fs::remove_all(dir);
}

TEST_CASE("config digest is stable and key-order independent") {
  AppConfig a, b;
  CHECK(config_digest(a) == config_digest(b));
  b.train.adam_lr = 1e-3;
  CHECK(config_digest(a) != config_digest(b));
}
