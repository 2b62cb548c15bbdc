#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "msxai/commands.hpp"

namespace cli = msxai::cli;

int main(int argc, char** argv) {
  CLI::App app{"Calibrated, explainable diagnosis from mass-spectrometry protein profiles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kToolVersion);

  const std::vector<std::string> schemes{"raw", "binned", "statistical", "auc", "ratio"};

  cli::SimulateOptions sim;
  std::optional<std::string> sim_config;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic labeled corpus");
  simulate->add_option("--config", sim_config, "Generator config JSON");
  simulate->add_option("--seed", sim.seed, "Override the generator seed");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  cli::TrainOptions train;
  std::optional<std::string> train_grid;
  auto* tr = app.add_subcommand("train", "Fit, tune and calibrate a model");
  tr->add_option("--manifest", train.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", train.config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--grid", train_grid, "Hyperparameter grid JSON");
  tr->add_option("--scheme", train.scheme, "Feature scheme")->check(CLI::IsMember(schemes));
  tr->add_option("--bin-width", train.bin_width, "Points per bin for the binned scheme");
  tr->add_option("--seed", train.seed, "Override the pipeline master seed");
  tr->add_option("--out", train.out, "Output directory")->required();

  cli::EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Classification reports and calibration curves");
  evaluate->add_option("--model", ev.model, "model.json from train")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--manifest", ev.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--scheme", ev.scheme, "Expected feature scheme")->check(CLI::IsMember(schemes));
  evaluate->add_flag("--ablation", ev.ablation, "Also run the three-row ablation");
  evaluate->add_option("--out", ev.out, "Output directory")->required();

  cli::ExplainOptions ex;
  auto* explain = app.add_subcommand("explain", "Global importances and SHAP summary");
  explain->add_option("--model", ex.model, "model.json from train")->required()->check(CLI::ExistingFile);
  explain->add_option("--manifest", ex.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  explain->add_option("--out", ex.out, "Output directory")->required();

  cli::DiagnoseOptions dg;
  std::optional<std::string> dg_manifest;
  std::vector<std::string> dg_spectra;
  auto* diagnose = app.add_subcommand("diagnose", "Four-stage diagnosis of individual spectra");
  diagnose->add_option("--model", dg.model, "model.json from train")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--summary", dg.summary, "summary.json from explain")->required();
  diagnose->add_option("--manifest", dg_manifest, "Manifest of spectra to diagnose");
  diagnose->add_option("spectra", dg_spectra, "Spectrum files");
  diagnose->add_option("--out", dg.out, "Output directory")->required();

  cli::AblateOptions ab;
  std::optional<std::string> ab_model;
  auto* ablate = app.add_subcommand("ablate", "RF / +outlier filter / +calibration and gate");
  ablate->add_option("--manifest", ab.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--config", ab.config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--model", ab_model, "Take hyperparameters from this model.json");
  ablate->add_option("--scheme", ab.scheme, "Feature scheme")->check(CLI::IsMember(schemes));
  ablate->add_option("--seed", ab.seed, "Override the pipeline master seed");
  ablate->add_option("--out", ab.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      if (sim_config) sim.config = *sim_config;
      cli::cmd_simulate(sim);
    } else if (tr->parsed()) {
      if (train_grid) train.grid = *train_grid;
      cli::cmd_train(train);
    } else if (evaluate->parsed()) {
      cli::cmd_evaluate(ev);
    } else if (explain->parsed()) {
      cli::cmd_explain(ex);
    } else if (diagnose->parsed()) {
      if (dg_manifest) dg.manifest = *dg_manifest;
      for (const auto& s : dg_spectra) dg.spectra.emplace_back(s);
      cli::cmd_diagnose(dg);
    } else if (ablate->parsed()) {
      if (ab_model) ab.model = *ab_model;
      cli::cmd_ablate(ab);
    }
  } catch (const msxai::StageError& e) {
    std::cerr << "msxai: " << e.what() << "\n";
    return 2;
  } catch (const msxai::Error& e) {
    std::cerr << "msxai: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "msxai: unexpected failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
