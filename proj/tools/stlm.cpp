// stlm: synthesize data, train, evaluate and ablate the two-stream anomaly
// detection model.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime numeric failure,
// 3 check failure.

#include <CLI11.hpp>

#include <iostream>

#include "stlm/commands.hpp"
#include "stlm/kernels.hpp"

using namespace stlm;

namespace {

std::vector<std::pair<std::string, std::string>> parse_extras(
    const std::vector<std::string>& extras) {
  // remaining args of the form --section.key value or --section.key=value
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < extras.size(); ++i) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
      throw ConfigError("unrecognized argument: " + tok);
    tok = tok.substr(2);
    auto eq = tok.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("missing value for --" + tok);
      out.emplace_back(tok, extras[++i]);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teacher-guided two-stream anomaly detection"};
  app.allow_extras();

  std::string config_path, out_dir, data_dir, checkpoint, image_path, resume, axis;
  int jobs = 1, gradcheck_iters = 20;
  bool serial = false;

  app.add_flag("--serial", serial, "single-threaded deterministic kernel backend");

  auto* synth = app.add_subcommand("synth", "write a synthetic MVTec-style dataset");
  synth->add_option("--config", config_path);
  synth->add_option("--out", out_dir)->required();
  synth->allow_extras();

  auto* tr = app.add_subcommand("train", "train on a dataset directory");
  tr->add_option("--config", config_path);
  tr->add_option("--data", data_dir)->required();
  tr->add_option("--out", out_dir)->required();
  tr->add_option("--resume", resume);
  tr->allow_extras();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--config", config_path);
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--out", out_dir)->required();
  int ev_k = -1;
  double ev_fpr = -1;
  ev->add_option("--k", ev_k, "top-k pixels for the image score");
  ev->add_option("--fpr-limit", ev_fpr, "PRO integration limit");
  ev->add_option("--jobs", jobs);
  ev->allow_extras();

  auto* inf = app.add_subcommand("infer", "score one image");
  inf->add_option("--config", config_path);
  inf->add_option("--checkpoint", checkpoint)->required();
  inf->add_option("--image", image_path)->required();
  inf->add_option("--out", out_dir)->required();
  inf->allow_extras();

  auto* ab = app.add_subcommand("ablate", "train+eval across one config axis");
  ab->add_option("--config", config_path);
  ab->add_option("--axis", axis)->required();
  ab->add_option("--out", out_dir)->required();
  ab->add_option("--jobs", jobs);
  ab->allow_extras();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--iters", gradcheck_iters);
  gc->allow_extras();

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (serial) kernels::set_backend(kernels::Backend::Serial);

  try {
    CLI::App* sub = app.get_subcommands().front();
    auto overrides = parse_extras(sub->remaining());
    AppConfig cfg = load_config_file(config_path, overrides);

    if (sub == synth) {
      run_synth(cfg, out_dir);
      std::cout << "dataset written to " << out_dir << "\n";
    } else if (sub == tr) {
      auto r = run_train(cfg, data_dir, out_dir, resume);
      std::cout << "trained " << r.steps << " steps, l_total " << r.first.l_total << " -> "
                << r.last.l_total << "\n";
    } else if (sub == ev) {
      if (ev_k > 0) cfg.eval.k = ev_k;
      if (ev_fpr > 0) cfg.eval.fpr_limit = ev_fpr;
      cfg.eval.jobs = jobs;
      auto rep = run_eval(cfg, checkpoint, data_dir, out_dir);
      std::cout << "image_auroc " << rep.image_auroc << "  pixel_auroc " << rep.pixel_auroc
                << "  pro " << rep.pro << "  ap " << rep.ap << "  fnr " << rep.fnr << "\n";
    } else if (sub == inf) {
      double score = run_infer(cfg, checkpoint, image_path, out_dir);
      std::cout << "image_score " << score << "\n";
    } else if (sub == ab) {
      auto rows = run_ablate(cfg, axis, out_dir, jobs);
      for (const auto& r : rows)
        std::cout << r.variant << "  I-AUROC " << r.image_auroc << "  P-AUROC "
                  << r.pixel_auroc << "  PRO " << r.pro << "  AP " << r.ap << "  params "
                  << r.params << "  " << r.wall_seconds << "s\n";
    } else if (sub == gc) {
      bool ok = run_gradcheck(gradcheck_iters, cfg.seed, std::cout);
      if (!ok) return 3;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.get_name() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
