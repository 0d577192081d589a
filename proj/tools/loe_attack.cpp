// Command-line driver: model generation, query campaigns, alignment and
// extraction, condition sweeps, artifact verification, and replay of
// persisted query logs.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "loe/attack.hpp"
#include "loe/config.hpp"
#include "loe/io.hpp"

namespace {

loe::config::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return loe::config::ExperimentConfig{};
  return loe::config::parse_config(loe::io::read_text_file(path));
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shuffled-activation weight extraction harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, out_dir = "run", model_path, log_path, manifest_path;

  auto* gen = app.add_subcommand("gen-model", "generate and persist model weights");
  gen->add_option("--config", config_path, "experiment config file");
  gen->add_option("--out", out_path, "output weight container")->required();

  auto* atk = app.add_subcommand("attack", "run the full extraction pipeline");
  atk->add_option("--config", config_path, "experiment config file");
  atk->add_option("--model", model_path, "use an existing weight container");
  atk->add_option("--out-dir", out_dir, "output directory");

  auto* swp = app.add_subcommand("sweep", "condition-cap sweep per layer");
  swp->add_option("--config", config_path, "experiment config file");
  swp->add_option("--out-dir", out_dir, "output directory");

  auto* ver = app.add_subcommand("verify", "re-check a finished run");
  ver->add_option("--manifest", manifest_path, "manifest.json of the run")->required();

  auto* rep = app.add_subcommand("replay", "re-run alignment/extraction from a query log");
  rep->add_option("--config", config_path, "experiment config file");
  rep->add_option("--log", log_path, "query log (.pbql)")->required();
  rep->add_option("--model", model_path, "weight container of the queried model")->required();
  rep->add_option("--out-dir", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(config_path);
      const auto model = loe::tfm::init_model(cfg.model, cfg.seed_model);
      loe::io::save_weights(out_path, loe::io::model_to_weightfile(model));
      std::cout << "wrote " << out_path << "\n";
    } else if (atk->parsed()) {
      const auto cfg = load_config(config_path);
      std::optional<loe::tfm::Model> model;
      if (!model_path.empty())
        model = loe::io::weightfile_to_model(loe::io::load_weights(model_path));
      const auto manifest = loe::attack::cmd_attack(cfg, out_dir, std::move(model));
      std::cout << "run complete, manifest at " << out_dir << "/manifest.json\n";
      for (const auto& [name, path] : manifest.files)
        std::cout << "  " << name << ": " << path << "\n";
    } else if (swp->parsed()) {
      const auto cfg = load_config(config_path);
      const auto reports = loe::attack::cmd_sweep(cfg, out_dir);
      std::cout << "wrote " << out_dir << "/sweep_report.csv ("
                << reports.size() << " layers)\n";
    } else if (ver->parsed()) {
      const auto failures = loe::attack::cmd_verify(manifest_path);
      if (failures.empty()) {
        std::cout << "verify: ok\n";
        return 0;
      }
      for (const auto& f : failures) std::cout << "verify: FAILED check " << f << "\n";
      return 1;
    } else if (rep->parsed()) {
      const auto cfg = load_config(config_path);
      loe::attack::cmd_replay(log_path, model_path, cfg, out_dir);
      std::cout << "replayed reports written to " << out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
