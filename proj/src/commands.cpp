#include "stlm/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "stlm/checkpoint.hpp"
#include "stlm/dataset_io.hpp"
#include "stlm/png_io.hpp"

#ifndef STLM_GIT_DESCRIBE
#define STLM_GIT_DESCRIBE "unknown"
#endif

namespace stlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json report_to_json(const MetricsReport& rep) {
  json per_class = json::object();
  for (const auto& [name, cm] : rep.per_class)
    per_class[name] = {{"image_auroc", cm.image_auroc},
                       {"pixel_auroc", cm.pixel_auroc},
                       {"pro", cm.pro},
                       {"ap", cm.ap},
                       {"n_images", cm.n_images}};
  return json{{"image_auroc", rep.image_auroc},
              {"pixel_auroc", rep.pixel_auroc},
              {"pro", rep.pro},
              {"ap", rep.ap},
              {"fnr", rep.fnr},
              {"top_k", rep.top_k},
              {"seed", rep.seed},
              {"config_digest", rep.config_digest},
              {"per_class", per_class}};
}

}  // namespace

void write_manifest(const std::string& out_dir, const std::string& command,
                    const AppConfig& cfg, const std::string& started_at) {
  json m{{"command", command},
         {"config_digest", config_digest(cfg)},
         {"config", config_to_json(cfg)},
         {"seed", cfg.seed},
         {"git_describe", STLM_GIT_DESCRIBE},
         {"out_dir", out_dir},
         {"started_at", started_at.empty() ? now_iso8601() : started_at},
         {"finished_at", now_iso8601()}};
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  os << m.dump(2) << "\n";
}

void run_synth(const AppConfig& cfg, const std::string& out_dir) {
  std::string started = now_iso8601();
  auto ds = make_synthetic_dataset(synth_class_from_name(cfg.data.class_kind),
                                   cfg.data.n_train, cfg.data.n_test_good,
                                   cfg.data.n_test_bad, cfg.seed, cfg.model.image_channels,
                                   cfg.model.image_size);
  fs::create_directories(out_dir);
  write_dataset(out_dir, ds);
  write_manifest(out_dir, "synth", cfg, started);
}

TrainOutcome run_train(const AppConfig& cfg, const std::string& data_dir,
                       const std::string& out_dir, const std::string& resume) {
  std::string started = now_iso8601();
  auto ds = read_dataset(data_dir, cfg.model.image_size);
  if (ds.channels != cfg.model.image_channels)
    throw ConfigError("config: model.image_channels=" +
                      std::to_string(cfg.model.image_channels) + " but dataset has " +
                      std::to_string(ds.channels));
  Model<float> model(cfg.model, cfg.seed);
  fs::create_directories(out_dir);
  TrainOutcome out;
  out.teacher_checksum_before = model.checksum("teacher.");
  auto res = train(model, ds, cfg.train, cfg.anomaly, cfg.perlin, out_dir, resume);
  out.teacher_checksum_after = model.checksum("teacher.");
  out.first = res.first;
  out.last = res.last;
  out.steps = res.steps;
  write_manifest(out_dir, "train", cfg, started);
  return out;
}

MetricsReport run_eval(const AppConfig& cfg, const std::string& checkpoint_path,
                       const std::string& data_dir, const std::string& out_dir,
                       bool dump_maps) {
  std::string started = now_iso8601();
  auto ds = read_dataset(data_dir, cfg.model.image_size);
  Model<float> model(cfg.model, cfg.seed);
  model.import_params(load_checkpoint(checkpoint_path), /*inference_only=*/true);

  std::vector<ScoreMap> maps;
  auto rep = evaluate(model, ds, cfg.eval, &maps);
  rep.seed = cfg.seed;
  rep.config_digest = config_digest(cfg);

  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "report.json");
    os << report_to_json(rep).dump(2) << "\n";
  }
  {
    std::ofstream os(fs::path(out_dir) / "report.csv");
    os << "class,image_auroc,pixel_auroc,pro,ap,fnr,n_images\n";
    os << std::setprecision(12);
    os << "overall," << rep.image_auroc << "," << rep.pixel_auroc << "," << rep.pro << ","
       << rep.ap << "," << rep.fnr << "," << ds.test.size() << "\n";
    for (const auto& [name, cm] : rep.per_class)
      os << name << "," << cm.image_auroc << "," << cm.pixel_auroc << "," << cm.pro << ","
         << cm.ap << ",," << cm.n_images << "\n";
  }
  if (dump_maps) {
    for (size_t i = 0; i < ds.test.size(); ++i) {
      fs::path base = fs::path(out_dir) / "maps" / (ds.test[i].id + ".png");
      fs::create_directories(base.parent_path());
      write_png_gray16(base.string(), maps[i].v, maps[i].h, maps[i].w);
      fs::path raw = base;
      raw.replace_extension(".stlmmap");
      write_map_raw(raw.string(), maps[i]);
    }
  }
  write_manifest(out_dir, "eval", cfg, started);
  return rep;
}

double run_infer(const AppConfig& cfg, const std::string& checkpoint_path,
                 const std::string& image_path, const std::string& out_dir) {
  std::string started = now_iso8601();
  Model<float> model(cfg.model, cfg.seed);
  model.import_params(load_checkpoint(checkpoint_path), /*inference_only=*/true);
  Image img = read_png(image_path);
  if (img.h != cfg.model.image_size || img.w != cfg.model.image_size)
    img = resize_bilinear(img, cfg.model.image_size, cfg.model.image_size);
  if (img.c != cfg.model.image_channels)
    throw ConfigError("config: image has " + std::to_string(img.c) +
                      " channels, model wants " + std::to_string(cfg.model.image_channels));
  auto map = infer_one(model, img);
  fs::create_directories(out_dir);
  std::string stem = fs::path(image_path).stem().string();
  write_png_gray16((fs::path(out_dir) / (stem + "_map.png")).string(), map.v, map.h, map.w);
  write_map_raw((fs::path(out_dir) / (stem + "_map.stlmmap")).string(), map);
  write_manifest(out_dir, "infer", cfg, started);
  int k = cfg.eval.k > 0 ? cfg.eval.k : auto_top_k(map.h, map.w);
  return image_score(map, k);
}

std::vector<AblateRow> run_ablate(const AppConfig& base, const std::string& axis,
                                  const std::string& out_dir, int jobs) {
  std::string started = now_iso8601();
  struct Variant {
    std::string name;
    AppConfig cfg;
  };
  std::vector<Variant> variants;
  auto push = [&](const std::string& name, AppConfig c) { variants.push_back({name, c}); };

  if (axis == "decoder_sharing") {
    AppConfig c = base;
    c.model.shared_decoder = true;
    push("shared", c);
    c.model.shared_decoder = false;
    push("separate", c);
  } else if (axis == "fa_input_mode") {
    for (auto m : {FaInputMode::Product, FaInputMode::Cosine, FaInputMode::ResidualConcat,
                   FaInputMode::Concat}) {
      AppConfig c = base;
      c.model.fa_input_mode = m;
      push(fa_input_mode_name(m), c);
    }
  } else if (axis == "stage_mode") {
    for (auto m : {StageMode::OneStage, StageMode::TwoStage}) {
      AppConfig c = base;
      c.train.stage_mode = m;
      push(stage_mode_name(m), c);
    }
  } else if (axis == "use_teacher") {
    for (bool v : {true, false}) {
      AppConfig c = base;
      c.model.use_teacher = v;
      push(v ? "with_teacher" : "without_teacher", c);
    }
  } else if (axis == "use_plain_stream") {
    for (bool v : {true, false}) {
      AppConfig c = base;
      c.model.use_plain_stream = v;
      push(v ? "with_plain" : "teacher_as_plain", c);
    }
  } else if (axis == "layers_used") {
    for (auto& l : std::vector<std::vector<int>>{{1}, {2}, {1, 2}}) {
      AppConfig c = base;
      c.model.layers_used = l;
      std::string name = "L";
      for (int x : l) name += std::to_string(x);
      push(name, c);
    }
  } else if (axis == "anomaly_prob") {
    for (double p : {0.25, 0.5, 0.75, 1.0}) {
      AppConfig c = base;
      c.anomaly.activation_prob = p;
      push("prob_" + std::to_string(p).substr(0, 4), c);
    }
  } else if (axis == "distill_mode") {
    for (auto m : {DistillMode::Feature, DistillMode::Logit}) {
      AppConfig c = base;
      c.model.distill_mode = m;
      push(distill_mode_name(m), c);
    }
  } else if (axis == "generator") {
    for (auto g : {AnomalyGenerator::PerlinBlend, AnomalyGenerator::CutpastePatch,
                   AnomalyGenerator::CutpasteScar}) {
      AppConfig c = base;
      c.anomaly.generator = g;
      push(g == AnomalyGenerator::PerlinBlend
               ? "perlin_blend"
               : (g == AnomalyGenerator::CutpastePatch ? "cutpaste_patch" : "cutpaste_scar"),
           c);
    }
  } else if (axis == "fa_width") {
    for (int w : {128, 256}) {
      AppConfig c = base;
      c.model.fa_channels = w;
      push("fa" + std::to_string(w), c);
    }
  } else {
    throw ConfigError("ablate: unknown axis " + axis);
  }

  // shared dataset across variants, same seed
  auto ds = make_synthetic_dataset(synth_class_from_name(base.data.class_kind),
                                   base.data.n_train, base.data.n_test_good,
                                   base.data.n_test_bad, base.seed,
                                   base.model.image_channels, base.model.image_size);

  std::vector<AblateRow> rows(variants.size());
  const int nv = int(variants.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs)) if (jobs > 1)
  for (int i = 0; i < nv; ++i) {
    const auto& v = variants[size_t(i)];
    auto t0 = std::chrono::steady_clock::now();
    Model<float> model(v.cfg.model, v.cfg.seed);
    train(model, ds, v.cfg.train, v.cfg.anomaly, v.cfg.perlin, "");
    auto rep = evaluate(model, ds, v.cfg.eval);
    auto t1 = std::chrono::steady_clock::now();
    AblateRow row;
    row.variant = v.name;
    row.image_auroc = rep.image_auroc;
    row.pixel_auroc = rep.pixel_auroc;
    row.pro = rep.pro;
    row.ap = rep.ap;
    row.params = model.param_count(false);
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    rows[size_t(i)] = row;
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / ("ablate_" + axis + ".csv"));
    os << "variant,image_auroc,pixel_auroc,pro,ap,params,wall_seconds\n";
    os << std::setprecision(12);
    for (const auto& r : rows)
      os << r.variant << "," << r.image_auroc << "," << r.pixel_auroc << "," << r.pro << ","
         << r.ap << "," << r.params << "," << r.wall_seconds << "\n";
    write_manifest(out_dir, "ablate " + axis, base, started);
  }
  return rows;
}

bool run_gradcheck(int iters, uint64_t seed, std::ostream& os, const GradCheckOptions& opt) {
  bool all_pass = true;
  auto report = [&](const CheckResult& r) {
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err=" << r.max_rel_err
       << "\n";
    all_pass = all_pass && r.pass;
  };
  for (const auto& r : primitive_gradcheck_suite(iters, seed, opt)) report(r);
  for (const auto& r : loss_gradcheck_suite(iters, seed, opt)) report(r);
  report(model_gradcheck(iters, hash_combine(seed, 999)));
  return all_pass;
}

}  // namespace stlm
