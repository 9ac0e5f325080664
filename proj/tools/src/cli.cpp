#include "modal_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <ostream>

#include "commands.hpp"

namespace modal::cli {

namespace {

int exit_code(Errc code) {
  switch (code) {
    case Errc::missing_input: return kExitMissingInput;
    case Errc::invalid_argument: return kExitUsage;
    case Errc::numeric_error: return 1;
    default: return kExitInvariant;
  }
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value run configuration file");
  sub->add_option("--set", c.sets, "Override one config key (key=value); repeatable");
  sub->add_option("--jobs", c.jobs, "Worker threads over sequences")->check(CLI::PositiveNumber);
}

std::vector<std::pair<std::string, std::string>> overrides(
    const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::invalid_argument, "--set expects key=value");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    out.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  for (const auto& f : flags) {
    if (!f.second.empty()) out.push_back(f);
  }
  return out;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modal panoptic segmentation and tracking toolkit", "modal-panoptic"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::string out_dir, data, gt, pred;
  std::string seed, sequences, sweeps, strategy, model, features;
  bool ambiguous = false, dense = false;
  std::vector<std::string> runs;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, common);
  synth->add_option("--out", out_dir, "Dataset root")->required();
  synth->add_option("--seed", seed);
  synth->add_option("--sequences", sequences);
  synth->add_option("--sweeps", sweeps);
  synth->add_flag("--ambiguous", ambiguous, "Adjacent same-class groups");

  auto* targets = app.add_subcommand("targets", "Dump training targets and class-mean extents");
  add_common(targets, common);
  targets->add_option("--data", data)->required();
  targets->add_option("--out", out_dir)->required();
  targets->add_option("--strategy", strategy, "sw, max, cwm or dsb");
  targets->add_flag("--dense", dense, "Also write float32 heatmaps per sweep");

  auto* train = app.add_subcommand("train-mem", "Train the point membership network");
  add_common(train, common);
  train->add_option("--data", data)->required();
  train->add_option("--out", out_dir, "Model directory")->required();
  train->add_option("--seed", seed);
  train->add_option("--features", features, "geometry, geometry_bev or full");

  auto* infer = app.add_subcommand("infer", "Per-sweep panoptic predictions");
  auto* track = app.add_subcommand("track", "Panoptic predictions with temporal ids");
  for (auto* sub : {infer, track}) {
    add_common(sub, common);
    sub->add_option("--data", data)->required();
    sub->add_option("--out", out_dir)->required();
    sub->add_option("--seed", seed);
    sub->add_option("--strategy", strategy, "sw, max, cwm or dsb");
    sub->add_option("--model", model, "Model directory from train-mem, or nn");
  }

  auto* eval = app.add_subcommand("eval", "PQ and LSTQ of predictions against ground truth");
  eval->add_option("--gt", gt)->required();
  eval->add_option("--pred", pred)->required();
  eval->add_option("--out", out_dir, "Directory for pq.csv, lstq.csv, summary.csv");
  eval->add_option("--jobs", common.jobs)->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Markdown table and SVG chart over eval runs");
  report->add_option("--run", runs, "name=eval_dir; repeatable")->required();
  report->add_option("--out", out_dir)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::RequiredError& e) {
    app.exit(e, out, err);
    // No subcommand at all is a usage error; a missing --data/--gt is missing input.
    return app.get_subcommands().empty() ? kExitUsage : kExitMissingInput;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    auto settings = [&] {
      return Settings::resolve(common.config, overrides(common, {{"seed", seed},
                                                                  {"sequences", sequences},
                                                                  {"sweeps", sweeps},
                                                                  {"strategy", strategy},
                                                                  {"membership", model},
                                                                  {"train.features", features},
                                                                  {"ambiguous", ambiguous ? "true" : ""}}));
    };
    if (synth->parsed()) return cmd_synth(settings(), common.jobs, out_dir, out);
    if (targets->parsed()) return cmd_targets(settings(), common.jobs, data, out_dir, dense, out);
    if (train->parsed()) return cmd_train_mem(settings(), data, out_dir, out);
    if (infer->parsed()) return cmd_infer(settings(), common.jobs, data, out_dir, false, out);
    if (track->parsed()) return cmd_infer(settings(), common.jobs, data, out_dir, true, out);
    if (eval->parsed()) return cmd_eval(common.jobs, gt, pred, out_dir.empty() ? pred : out_dir, out);
    if (report->parsed()) return cmd_report(runs, out_dir, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}

}  // namespace modal::cli
