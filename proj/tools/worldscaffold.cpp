// worldscaffold: stage runner, workspace validation, standalone scene-graph
// evaluation and batch box corrections.
//
// Exit codes: 0 success, 1 validation failure or bad input, 2 missing
// dependency, 3 parse error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <cli11/CLI11.hpp>

#include "worldscaffold/error.hpp"
#include "worldscaffold/pipeline/config.hpp"
#include "worldscaffold/pipeline/stages.hpp"
#include "worldscaffold/pipeline/synth.hpp"
#include "worldscaffold/pipeline/validate.hpp"
#include "worldscaffold/pipeline/workspace.hpp"

namespace wp = worldscaffold::pipeline;
using worldscaffold::Error;
using worldscaffold::ErrorKind;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingDependency: return 2;
    case ErrorKind::Parse: return 3;
    case ErrorKind::InvalidInput:
    case ErrorKind::Validation: return 1;
  }
  return 1;
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || k <= 0) throw worldscaffold::InvalidInput("--k: expected positive integers, got '" + tok + "'");
    ks.push_back(k);
  }
  if (ks.empty()) throw worldscaffold::InvalidInput("--k: empty list");
  return ks;
}

struct StageArgs {
  std::string workspace;
  std::string config;
  std::optional<std::uint64_t> seed;
  bool stage_only = false;
};

void add_stage_options(CLI::App* sub, StageArgs& a, bool workspace_required = true) {
  auto* w = sub->add_option("--workspace", a.workspace, "workspace directory");
  if (workspace_required) w->required();
  sub->add_option("--config", a.config, "TOML config (defaults are embedded)");
  sub->add_option("--seed", a.seed, "seed for all randomized stages");
  sub->add_flag("--stage-only", a.stage_only, "skip the upstream chain");
}

wp::PipelineConfig make_config(const StageArgs& a) {
  wp::PipelineConfig cfg = a.config.empty() ? wp::parse_config(wp::default_config_toml()) : wp::load_config(a.config);
  if (a.seed) cfg.set_seed(*a.seed);
  cfg.validate();
  return cfg;
}

void print_reports(const std::vector<wp::StageReport>& reports) {
  wp::Json arr = wp::Json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  std::cout << arr.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"worldscaffold: 4D scene scaffolding pipeline"};
  app.require_subcommand(1);

  const std::vector<std::string> stage_names = {"sample", "merge", "floor", "fit", "smooth", "finalize", "eval-geom", "lks"};
  std::vector<StageArgs> stage_args(stage_names.size());
  std::vector<CLI::App*> stage_cmds;
  for (std::size_t i = 0; i < stage_names.size(); ++i) {
    auto* sub = app.add_subcommand(stage_names[i], "run the " + stage_names[i] + " stage");
    add_stage_options(sub, stage_args[i]);
    stage_cmds.push_back(sub);
  }

  StageArgs sgg_stage;
  std::string sgg_pred, sgg_gt, sgg_mode = "with", sgg_k = "10,20,50";
  auto* sgg = app.add_subcommand("eval-sgg", "scene-graph recall (workspace stage or standalone files)");
  add_stage_options(sgg, sgg_stage, false);
  auto* pred_opt = sgg->add_option("--pred", sgg_pred, "predicted graph file");
  auto* gt_opt = sgg->add_option("--gt", sgg_gt, "ground-truth graph file");
  pred_opt->needs(gt_opt);
  gt_opt->needs(pred_opt);
  sgg->add_option("--mode", sgg_mode, "constraint mode")->check(CLI::IsMember({"with", "no"}));
  sgg->add_option("--k", sgg_k, "comma-separated K values");

  std::string val_ws;
  auto* val = app.add_subcommand("validate", "audit a workspace without modifying it");
  val->add_option("--workspace", val_ws, "workspace directory")->required();

  std::string corr_ws, corr_file;
  auto* corr = app.add_subcommand("apply-corrections", "apply box edits, propagation, renames and deletions");
  corr->add_option("--workspace", corr_ws, "workspace directory")->required();
  corr->add_option("--corrections", corr_file, "corrections file (default: workspace corrections.json)");

  auto* defcfg = app.add_subcommand("default-config", "print the embedded default config");

  std::string synth_ws;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write the synthetic fixture workspace");
  synth->add_option("--workspace", synth_ws, "target directory")->required();
  synth->add_option("--seed", synth_seed, "fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      const auto cfg = make_config(stage_args[i]);
      const auto stage = *wp::parse_stage(stage_names[i]);
      print_reports(wp::run_pipeline(stage_args[i].workspace, stage, cfg, stage_args[i].stage_only));
      return 0;
    }
    if (sgg->parsed()) {
      auto cfg = make_config(sgg_stage);
      if (sgg->count("--mode"))
        cfg.metrics.constraint =
            sgg_mode == "with" ? worldscaffold::metrics::ConstraintMode::WithConstraint : worldscaffold::metrics::ConstraintMode::NoConstraint;
      if (sgg->count("--k")) cfg.metrics.ks = parse_ks(sgg_k);
      cfg.validate();
      if (!sgg_pred.empty()) {
        const auto frames = wp::join_graphs(wp::read_graph_file(sgg_pred), wp::read_graph_file(sgg_gt));
        std::cout << wp::scene_graph_report(frames, cfg.metrics.constraint, cfg.metrics.ks).dump(2) << "\n";
        return 0;
      }
      if (sgg_stage.workspace.empty()) throw worldscaffold::InvalidInput("eval-sgg needs --workspace or --pred/--gt");
      print_reports(wp::run_pipeline(sgg_stage.workspace, wp::Stage::EvalSgg, cfg, true));
      return 0;
    }
    if (val->parsed()) {
      const auto rep = wp::validate_workspace(val_ws);
      std::cout << rep.to_json().dump(2) << "\n";
      return rep.ok() ? 0 : 1;
    }
    if (corr->parsed()) {
      std::optional<std::filesystem::path> file;
      if (!corr_file.empty()) file = corr_file;
      print_reports({wp::apply_corrections(corr_ws, file)});
      return 0;
    }
    if (defcfg->parsed()) {
      std::cout << wp::default_config_toml();
      return 0;
    }
    if (synth->parsed()) {
      wp::write_synthetic_workspace(synth_ws, synth_seed);
      std::cout << synth_ws << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
