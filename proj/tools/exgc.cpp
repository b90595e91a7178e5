// Command-line entry point: dataset generation, condensation, baselines,
// evaluation, benchmark grids and a numerical self-check.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "exgc/coreset.hpp"
#include "exgc/error.hpp"
#include "exgc/explainers.hpp"
#include "exgc/harness.hpp"
#include "exgc/matching.hpp"
#include "exgc/tape.hpp"

namespace fs = std::filesystem;
using namespace exgc;

namespace {

std::string read_text(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << text;
}

struct GenArgs {
  std::string out;
  SbmParams sbm;
  std::uint64_t seed = 0;
};

struct CondenseArgs {
  std::string data, out, config;
  std::string mode, explainer, backbone;
  double ratio = 0.0, kappa = 0.0, lr_features = 0.0, lr_adjgen = 0.0;
  std::size_t k = 0, selection_period = 0, max_epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  bool literal_mset = false;
  bool quiet = false;
};

struct EvalArgs {
  std::string condensed, data, arch = "gcn", out;
  std::size_t repeats = 3, epochs = 300;
  std::uint64_t seed = 0;
  bool features_only = false;
  bool full = false;
};

struct BaselineArgs {
  std::string data, method, out;
  double ratio = 0.05;
  std::uint64_t seed = 0;
};

struct BenchArgs {
  std::string grid, out;
  std::size_t jobs = 1;
};

int run_gen(const GenArgs& a) {
  const LabeledGraph g = generate_sbm(a.sbm, a.seed);
  save_graph(g, a.out);
  std::cout << "wrote " << g.num_nodes << " nodes, " << g.edges.size() << " edges to " << a.out << "\n";
  return 0;
}

int run_condense(const CondenseArgs& a, const CLI::App& cmd) {
  CondenseConfig cfg;
  if (!a.config.empty()) apply_config_json(cfg, read_text(a.config));
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (given("--mode")) cfg.mode = parse_mode(a.mode);
  if (given("--ratio")) cfg.ratio = a.ratio;
  if (given("--k")) cfg.blocks = a.k;
  if (given("--kappa")) cfg.kappa = a.kappa;
  if (given("--selection-period")) cfg.selection_period = a.selection_period;
  if (given("--explainer")) cfg.explainer = parse_explainer(a.explainer);
  if (given("--backbone")) cfg.backbone_loop = parse_backbone_loop(a.backbone);
  if (given("--lr-features")) cfg.lr_features = a.lr_features;
  if (given("--lr-adjgen")) cfg.lr_adjgen = a.lr_adjgen;
  if (given("--max-epochs")) cfg.max_epochs = a.max_epochs;
  if (given("--patience")) cfg.patience = a.patience;
  if (given("--seed")) cfg.seed = a.seed;
  if (a.literal_mset) cfg.literal_mset = true;
  cfg.validate();

  const LabeledGraph g = load_graph(a.data).graph;
  const bool quiet = a.quiet;
  const MatchReport rep = condense(g, cfg, [quiet](const TraceRow& r) {
    if (quiet || r.epoch % 10 != 0) return;
    std::fprintf(stderr, "epoch %zu  loss %.6f  active %.3f  %.2fs\n", r.epoch, r.loss, r.active_frac,
                 r.seconds);
  });
  save_condensed(rep.state, cfg.threshold, a.out);
  save_trace(rep.trace, fs::path(a.out) / "trace.csv");
  std::cout << "convergence_epoch " << rep.convergence_epoch << "\n"
            << "final_loss " << rep.final_loss << "\n";
  return 0;
}

int run_evaluate(const EvalArgs& a) {
  const LabeledGraph g = load_graph(a.data).graph;
  TrainHyper hyper;
  hyper.epochs = a.epochs;
  const Arch arch = parse_arch(a.arch);
  const EvalMode mode = a.features_only ? EvalMode::FeaturesOnly : EvalMode::WithStructure;
  EvalReport r;
  if (a.full) {
    r = evaluate_full(g, arch, a.repeats, hyper, a.seed);
  } else {
    if (a.condensed.empty()) throw ConfigError("evaluate needs --condensed DIR or --full");
    r = evaluate_condensed(fs::path(a.condensed), g, arch, a.repeats, mode, hyper, a.seed);
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  fs::path out = a.out;
  if (out.empty()) {
    out = a.full ? fs::path("eval_full_" + a.arch + ".json")
                 : fs::path(a.condensed) / ("eval_" + a.arch + "_" + to_string(mode) + ".json");
  }
  write_text(out, to_json(r) + "\n");
  std::printf("%s %.4f +- %.4f over %zu repeats\n", a.arch.c_str(), r.mean, r.stddev, r.accuracies.size());
  return 0;
}

int run_baseline(const BaselineArgs& a) {
  const LabeledGraph g = load_graph(a.data).graph;
  CoresetResult r;
  if (a.method == "random") r = random_select(g, a.ratio, a.seed);
  else if (a.method == "herding") r = herding_select(g, a.ratio);
  else if (a.method == "kcenter") r = kcenter_select(g, a.ratio, a.seed);
  else throw ConfigError("unknown method '" + a.method + "' (expected random, herding or kcenter)");
  const LabeledGraph sub = coreset_graph(g, r);
  save_condensed(condensed_from_subgraph(sub), a.out);
  std::cout << "selected " << sub.num_nodes << " nodes\n";
  return 0;
}

int run_benchmark_cmd(const BenchArgs& a) {
  const auto cells = load_grid(a.grid);
  std::fprintf(stderr, "running %zu cells with %zu jobs\n", cells.size(), a.jobs);
  const auto rows = run_benchmark(cells, a.out, a.jobs);
  for (const auto& r : rows) {
    std::printf("%s %s ratio=%g %s acc=%.4f epochs=%zu seconds=%.2f\n", r.dataset.c_str(),
                r.method.c_str(), r.ratio, to_string(r.arch).c_str(), r.eval.mean, r.epochs, r.seconds);
  }
  return 0;
}

int run_selfcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : ad::selfcheck(seed)) {
    std::printf("%-6s %-28s rel_error %.3e\n", r.passed ? "ok" : "FAIL", r.name.c_str(), r.rel_error);
    ok = ok && r.passed;
  }

  SbmParams p;
  p.nodes_per_class = 10;
  p.feature_dim = 4;
  const LabeledGraph g = generate_sbm(p, 0);
  CondenseConfig cfg;
  cfg.ratio = 0.3;
  cfg.hidden = 16;
  cfg.adjgen_hidden = 16;
  cfg.max_epochs = 50;
  cfg.patience = 0;
  const auto gcond = condense(g, cfg);
  cfg.mode = Mode::MGCond;
  cfg.blocks = 1;
  const auto mgcond = condense(g, cfg);
  cfg.mode = Mode::Exgc;
  cfg.kappa = 1.0;
  cfg.selection_period = 1;
  const auto exgc = condense(g, cfg);
  double gap = 0.0;
  for (std::size_t t = 0; t < gcond.trace.size(); ++t) {
    gap = std::max(gap, std::abs(mgcond.trace.at(t).loss - gcond.trace[t].loss));
    gap = std::max(gap, std::abs(exgc.trace.at(t).loss - gcond.trace[t].loss));
  }
  const bool chain = gap <= 1e-12 && gcond.trace.size() == 50;
  std::printf("%-6s %-28s max_gap %.3e\n", chain ? "ok" : "FAIL", "reduction chain", gap);
  return ok && chain ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph condensation by gradient matching with explanation-guided node selection"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a stochastic block model dataset");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--classes", gen.sbm.num_classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.sbm.nodes_per_class, "Nodes per class")->capture_default_str();
  gen_cmd->add_option("--p-in", gen.sbm.p_in, "Within-class edge probability")->capture_default_str();
  gen_cmd->add_option("--p-out", gen.sbm.p_out, "Between-class edge probability")->capture_default_str();
  gen_cmd->add_option("--features", gen.sbm.feature_dim, "Feature dimension")->capture_default_str();
  gen_cmd->add_option("--separation", gen.sbm.class_mean_separation, "Distance of class means from 0")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.sbm.feature_noise, "Feature noise standard deviation")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  CondenseArgs cond;
  const CondenseConfig defaults;
  auto* cond_cmd = app.add_subcommand("condense", "Condense a dataset into a synthetic graph");
  cond_cmd->add_option("--data", cond.data, "Dataset directory")->required();
  cond_cmd->add_option("--out", cond.out, "Output directory for the condensed graph")->required();
  cond_cmd->add_option("--config", cond.config, "JSON config file; flags override its fields");
  cond_cmd->add_option("--mode", cond.mode, "gcond, mgcond or exgc")->default_str(to_string(defaults.mode));
  cond_cmd->add_option("--ratio", cond.ratio, "Condensation ratio N'/N")->default_val(defaults.ratio);
  cond_cmd->add_option("--k", cond.k, "Block count for mgcond")->default_val(defaults.blocks);
  cond_cmd->add_option("--kappa", cond.kappa, "Fraction activated per selection round (exgc)")
      ->default_val(defaults.kappa);
  cond_cmd->add_option("--selection-period", cond.selection_period, "Epochs between selection rounds (exgc)")
      ->default_val(defaults.selection_period);
  cond_cmd->add_option("--explainer", cond.explainer, "sa, local_mask, global_mask or random")
      ->default_str(to_string(defaults.explainer));
  cond_cmd->add_option("--backbone", cond.backbone, "one-step or inner-loop")
      ->default_str(to_string(defaults.backbone_loop));
  cond_cmd->add_option("--lr-features", cond.lr_features, "Step size for synthetic features")
      ->default_val(defaults.lr_features);
  cond_cmd->add_option("--lr-adjgen", cond.lr_adjgen, "Step size for the structure generator")
      ->default_val(defaults.lr_adjgen);
  cond_cmd->add_option("--max-epochs", cond.max_epochs, "Epoch limit")->default_val(defaults.max_epochs);
  cond_cmd->add_option("--patience", cond.patience, "Epochs without loss decrease before stopping (0 = off)")
      ->default_val(defaults.patience);
  cond_cmd->add_option("--seed", cond.seed, "Random seed")->default_val(defaults.seed);
  cond_cmd->add_flag("--literal-mset", cond.literal_mset, "Train the unselected pool instead of selected nodes");
  cond_cmd->add_flag("--quiet", cond.quiet, "Suppress progress lines");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Train classifiers on a condensed graph and test on the real graph");
  eval_cmd->add_option("--condensed", ev.condensed, "Condensed graph directory");
  eval_cmd->add_option("--data", ev.data, "Real dataset directory")->required();
  eval_cmd->add_option("--arch", ev.arch, "gcn, sgc or mlp")->capture_default_str();
  eval_cmd->add_option("--repeats", ev.repeats, "Training repeats")->capture_default_str();
  eval_cmd->add_option("--epochs", ev.epochs, "Training epochs per repeat")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Random seed")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Report JSON path (default: inside the condensed directory)");
  eval_cmd->add_flag("--features-only", ev.features_only, "Ignore condensed structure (identity propagation)");
  eval_cmd->add_flag("--full", ev.full, "Train on the real train split instead of a condensed graph");

  BaselineArgs base;
  auto* base_cmd = app.add_subcommand("baseline", "Select a coreset of real train nodes");
  base_cmd->add_option("--data", base.data, "Dataset directory")->required();
  base_cmd->add_option("--method", base.method, "random, herding or kcenter")->required();
  base_cmd->add_option("--ratio", base.ratio, "Selection ratio")->capture_default_str();
  base_cmd->add_option("--out", base.out, "Output directory")->required();
  base_cmd->add_option("--seed", base.seed, "Random seed")->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run a grid of methods and write report.csv and report.json");
  bench_cmd->add_option("--grid", bench.grid, "Grid JSON file")->required();
  bench_cmd->add_option("--out", bench.out, "Output directory")->required();
  bench_cmd->add_option("--jobs", bench.jobs, "Cells run in parallel")->capture_default_str();

  std::uint64_t check_seed = 0;
  auto* check_cmd = app.add_subcommand("selfcheck", "Finite-difference checks and the mode reduction identity");
  check_cmd->add_option("--seed", check_seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*cond_cmd) return run_condense(cond, *cond_cmd);
    if (*eval_cmd) return run_evaluate(ev);
    if (*base_cmd) return run_baseline(base);
    if (*bench_cmd) return run_benchmark_cmd(bench);
    if (*check_cmd) return run_selfcheck(check_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
