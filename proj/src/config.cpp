#include "stlm/config.hpp"

#include <fstream>
#include <set>

#include "stlm/checkpoint.hpp"

namespace stlm {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError("config: " + section + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key " +
                        (section.empty() ? it.key() : section + "." + it.key()));
}

template <class T>
void get(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for " + section + "." + key);
  }
}

}  // namespace

AppConfig parse_config(const json& j) {
  AppConfig cfg;
  check_keys(j, "", {"seed", "model", "train", "anomaly", "data", "eval"});
  if (j.contains("seed")) {
    try {
      cfg.seed = j.at("seed").get<uint64_t>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value for seed");
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"image_size", "image_channels", "patch_size", "student_dim", "teacher_dim",
                "encoder_depth", "teacher_depth", "heads", "mlp_ratio", "fa_channels",
                "fa_dilations", "shared_decoder", "use_plain_stream", "use_teacher",
                "fa_input_mode", "distill_mode", "layers_used", "query_tokens",
                "alt_teacher_assignment"});
    auto& mc = cfg.model;
    get(m, "model", "image_size", mc.image_size);
    get(m, "model", "image_channels", mc.image_channels);
    get(m, "model", "patch_size", mc.patch_size);
    get(m, "model", "student_dim", mc.student_dim);
    get(m, "model", "teacher_dim", mc.teacher_dim);
    get(m, "model", "encoder_depth", mc.encoder_depth);
    get(m, "model", "teacher_depth", mc.teacher_depth);
    get(m, "model", "heads", mc.heads);
    get(m, "model", "mlp_ratio", mc.mlp_ratio);
    get(m, "model", "fa_channels", mc.fa_channels);
    if (m.contains("fa_dilations")) {
      auto v = m.at("fa_dilations").get<std::vector<int>>();
      if (v.size() != 3) throw ConfigError("config: model.fa_dilations needs 3 entries");
      std::copy(v.begin(), v.end(), mc.fa_dilations.begin());
    }
    get(m, "model", "shared_decoder", mc.shared_decoder);
    get(m, "model", "use_plain_stream", mc.use_plain_stream);
    get(m, "model", "use_teacher", mc.use_teacher);
    if (m.contains("fa_input_mode"))
      mc.fa_input_mode = fa_input_mode_from_name(m.at("fa_input_mode").get<std::string>());
    if (m.contains("distill_mode"))
      mc.distill_mode = distill_mode_from_name(m.at("distill_mode").get<std::string>());
    get(m, "model", "layers_used", mc.layers_used);
    get(m, "model", "query_tokens", mc.query_tokens);
    get(m, "model", "alt_teacher_assignment", mc.alt_teacher_assignment);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"adam_lr", "adam_beta1", "adam_beta2", "sgd_lr", "sgd_momentum", "epochs",
                "batch_size", "stage_mode", "checkpoint_every", "grad_clip_norm",
                "grad_clip"});
    auto& tc = cfg.train;
    get(t, "train", "adam_lr", tc.adam_lr);
    get(t, "train", "adam_beta1", tc.adam_beta1);
    get(t, "train", "adam_beta2", tc.adam_beta2);
    get(t, "train", "sgd_lr", tc.sgd_lr);
    get(t, "train", "sgd_momentum", tc.sgd_momentum);
    get(t, "train", "epochs", tc.epochs);
    get(t, "train", "batch_size", tc.batch_size);
    if (t.contains("stage_mode"))
      tc.stage_mode = stage_mode_from_name(t.at("stage_mode").get<std::string>());
    get(t, "train", "checkpoint_every", tc.checkpoint_every);
    get(t, "train", "grad_clip_norm", tc.grad_clip_norm);
    get(t, "train", "grad_clip", tc.grad_clip);
  }

  if (j.contains("anomaly")) {
    const json& a = j.at("anomaly");
    check_keys(a, "anomaly",
               {"activation_prob", "beta_min", "beta_max", "source", "generator",
                "image_dir", "perlin"});
    auto& as = cfg.anomaly;
    get(a, "anomaly", "activation_prob", as.activation_prob);
    get(a, "anomaly", "beta_min", as.beta_min);
    get(a, "anomaly", "beta_max", as.beta_max);
    if (a.contains("source")) {
      std::string s = a.at("source").get<std::string>();
      if (s == "procedural_texture_bank") as.source = AnomalySource::ProceduralTextureBank;
      else if (s == "image_directory") as.source = AnomalySource::ImageDirectory;
      else throw ConfigError("config: unknown anomaly.source " + s);
    }
    if (a.contains("generator")) {
      std::string s = a.at("generator").get<std::string>();
      if (s == "perlin_blend") as.generator = AnomalyGenerator::PerlinBlend;
      else if (s == "cutpaste_patch") as.generator = AnomalyGenerator::CutpastePatch;
      else if (s == "cutpaste_scar") as.generator = AnomalyGenerator::CutpasteScar;
      else throw ConfigError("config: unknown anomaly.generator " + s);
    }
    get(a, "anomaly", "image_dir", as.image_dir);
    if (a.contains("perlin")) {
      const json& p = a.at("perlin");
      check_keys(p, "anomaly.perlin",
                 {"octaves", "period_min", "period_max", "persistence", "threshold"});
      get(p, "anomaly.perlin", "octaves", cfg.perlin.octaves);
      get(p, "anomaly.perlin", "period_min", cfg.perlin.period_min);
      get(p, "anomaly.perlin", "period_max", cfg.perlin.period_max);
      get(p, "anomaly.perlin", "persistence", cfg.perlin.persistence);
      get(p, "anomaly.perlin", "threshold", cfg.perlin.threshold);
    }
    if (as.activation_prob < 0 || as.activation_prob > 1)
      throw ConfigError("config: anomaly.activation_prob must be in [0,1]");
    if (as.beta_min < 0 || as.beta_max > 1 || as.beta_min > as.beta_max)
      throw ConfigError("config: anomaly beta range must satisfy 0 <= min <= max <= 1");
    if (cfg.perlin.threshold <= 0 || cfg.perlin.threshold >= 1)
      throw ConfigError("config: anomaly.perlin.threshold must be inside (0,1)");
    if (cfg.perlin.persistence <= 0 || cfg.perlin.persistence > 1)
      throw ConfigError("config: anomaly.perlin.persistence must be in (0,1]");
    if (cfg.perlin.octaves < 1) throw ConfigError("config: anomaly.perlin.octaves must be >= 1");
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data", {"class_kind", "n_train", "n_test_good", "n_test_bad"});
    get(d, "data", "class_kind", cfg.data.class_kind);
    get(d, "data", "n_train", cfg.data.n_train);
    get(d, "data", "n_test_good", cfg.data.n_test_good);
    get(d, "data", "n_test_bad", cfg.data.n_test_bad);
    synth_class_from_name(cfg.data.class_kind);  // validates
    if (cfg.data.n_train < 1 || cfg.data.n_test_good < 1 || cfg.data.n_test_bad < 0)
      throw ConfigError("config: data counts must be >= 1 (n_test_bad may be 0)");
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"k", "fpr_limit", "connectivity", "jobs"});
    get(e, "eval", "k", cfg.eval.k);
    get(e, "eval", "fpr_limit", cfg.eval.fpr_limit);
    get(e, "eval", "connectivity", cfg.eval.connectivity);
    get(e, "eval", "jobs", cfg.eval.jobs);
    if (cfg.eval.fpr_limit <= 0 || cfg.eval.fpr_limit > 1)
      throw ConfigError("config: eval.fpr_limit must be in (0,1]");
    if (cfg.eval.connectivity != 4 && cfg.eval.connectivity != 8)
      throw ConfigError("config: eval.connectivity must be 4 or 8");
  }

  cfg.train.seed = cfg.seed;
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  json m{{"image_size", cfg.model.image_size},
         {"image_channels", cfg.model.image_channels},
         {"patch_size", cfg.model.patch_size},
         {"student_dim", cfg.model.student_dim},
         {"teacher_dim", cfg.model.teacher_dim},
         {"encoder_depth", cfg.model.encoder_depth},
         {"teacher_depth", cfg.model.teacher_depth},
         {"heads", cfg.model.heads},
         {"mlp_ratio", cfg.model.mlp_ratio},
         {"fa_channels", cfg.model.fa_channels},
         {"fa_dilations", cfg.model.fa_dilations},
         {"shared_decoder", cfg.model.shared_decoder},
         {"use_plain_stream", cfg.model.use_plain_stream},
         {"use_teacher", cfg.model.use_teacher},
         {"fa_input_mode", fa_input_mode_name(cfg.model.fa_input_mode)},
         {"distill_mode", distill_mode_name(cfg.model.distill_mode)},
         {"layers_used", cfg.model.layers_used},
         {"query_tokens", cfg.model.query_tokens},
         {"alt_teacher_assignment", cfg.model.alt_teacher_assignment}};
  json t{{"adam_lr", cfg.train.adam_lr},
         {"adam_beta1", cfg.train.adam_beta1},
         {"adam_beta2", cfg.train.adam_beta2},
         {"sgd_lr", cfg.train.sgd_lr},
         {"sgd_momentum", cfg.train.sgd_momentum},
         {"epochs", cfg.train.epochs},
         {"batch_size", cfg.train.batch_size},
         {"stage_mode", stage_mode_name(cfg.train.stage_mode)},
         {"checkpoint_every", cfg.train.checkpoint_every},
         {"grad_clip_norm", cfg.train.grad_clip_norm},
         {"grad_clip", cfg.train.grad_clip}};
  json a{{"activation_prob", cfg.anomaly.activation_prob},
         {"beta_min", cfg.anomaly.beta_min},
         {"beta_max", cfg.anomaly.beta_max},
         {"source", cfg.anomaly.source == AnomalySource::ProceduralTextureBank
                        ? "procedural_texture_bank"
                        : "image_directory"},
         {"generator", cfg.anomaly.generator == AnomalyGenerator::PerlinBlend
                           ? "perlin_blend"
                           : (cfg.anomaly.generator == AnomalyGenerator::CutpastePatch
                                  ? "cutpaste_patch"
                                  : "cutpaste_scar")},
         {"image_dir", cfg.anomaly.image_dir},
         {"perlin",
          {{"octaves", cfg.perlin.octaves},
           {"period_min", cfg.perlin.period_min},
           {"period_max", cfg.perlin.period_max},
           {"persistence", cfg.perlin.persistence},
           {"threshold", cfg.perlin.threshold}}}};
  json d{{"class_kind", cfg.data.class_kind},
         {"n_train", cfg.data.n_train},
         {"n_test_good", cfg.data.n_test_good},
         {"n_test_bad", cfg.data.n_test_bad}};
  json e{{"k", cfg.eval.k},
         {"fpr_limit", cfg.eval.fpr_limit},
         {"connectivity", cfg.eval.connectivity},
         {"jobs", cfg.eval.jobs}};
  return json{{"seed", cfg.seed}, {"model", m},  {"train", t},
              {"anomaly", a},     {"data", d},   {"eval", e}};
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  json* cur = &j;
  size_t start = 0;
  while (true) {
    size_t dot = dotted_key.find('.', start);
    std::string part = dotted_key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("config: bad override key " + dotted_key);
    if (dot == std::string::npos) {
      (*cur)[part] = parsed;
      return;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

AppConfig load_config_file(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
  }
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  if (const char* env = std::getenv("STLM_SEED")) j["seed"] = std::stoull(env);
  return parse_config(j);
}

std::string config_digest(const AppConfig& cfg) {
  std::string dump = config_to_json(cfg).dump();
  uint64_t h = fnv1a(dump.data(), dump.size());
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

}  // namespace stlm
