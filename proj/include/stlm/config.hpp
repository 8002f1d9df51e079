#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stlm/infer.hpp"
#include "stlm/model.hpp"
#include "stlm/synth.hpp"
#include "stlm/train.hpp"

namespace stlm {

struct DataConfig {
  std::string class_kind = "stripes";
  int n_train = 32;
  int n_test_good = 10;
  int n_test_bad = 10;
};

struct AppConfig {
  uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  AnomalySpec anomaly;
  PerlinParams perlin;
  DataConfig data;
  EvalOptions eval;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict parse: unknown or ill-typed keys are reported with their dotted
// path. Missing keys keep defaults.
AppConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& cfg);

AppConfig load_config_file(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

// "train.adam_lr=0.001" style override onto the raw JSON tree.
void apply_override(nlohmann::json& j, const std::string& dotted_key,
                    const std::string& value);

std::string config_digest(const AppConfig& cfg);

}  // namespace stlm
