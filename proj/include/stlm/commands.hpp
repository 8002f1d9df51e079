#pragma once

#include <ostream>
#include <string>

#include "stlm/config.hpp"
#include "stlm/gradcheck.hpp"

namespace stlm {

// Library-level command entry points shared by the CLI and the test suites.
// Each one writes its artifacts plus a manifest.json into out_dir.

void write_manifest(const std::string& out_dir, const std::string& command,
                    const AppConfig& cfg, const std::string& started_at = "");

void run_synth(const AppConfig& cfg, const std::string& out_dir);

struct TrainOutcome {
  LossBundle first, last;
  int steps = 0;
  uint64_t teacher_checksum_before = 0, teacher_checksum_after = 0;
};
TrainOutcome run_train(const AppConfig& cfg, const std::string& data_dir,
                       const std::string& out_dir, const std::string& resume = "");

MetricsReport run_eval(const AppConfig& cfg, const std::string& checkpoint_path,
                       const std::string& data_dir, const std::string& out_dir,
                       bool dump_maps = true);

double run_infer(const AppConfig& cfg, const std::string& checkpoint_path,
                 const std::string& image_path, const std::string& out_dir);

struct AblateRow {
  std::string variant;
  double image_auroc = 0, pixel_auroc = 0, pro = 0, ap = 0;
  int64_t params = 0;
  double wall_seconds = 0;
};
std::vector<AblateRow> run_ablate(const AppConfig& cfg, const std::string& axis,
                                  const std::string& out_dir, int jobs = 1);

// Returns true when every check passes; prints one line per check.
bool run_gradcheck(int iters, uint64_t seed, std::ostream& os,
                   const GradCheckOptions& opt = {});

}  // namespace stlm
