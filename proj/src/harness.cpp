#include "exgc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "exgc/coreset.hpp"
#include "exgc/error.hpp"
#include "exgc/matching.hpp"
#include "text_io.hpp"

namespace exgc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Arch a) {
  switch (a) {
    case Arch::Gcn: return "gcn";
    case Arch::Sgc: return "sgc";
    case Arch::Mlp: return "mlp";
  }
  return "?";
}

std::string to_string(EvalMode m) {
  return m == EvalMode::WithStructure ? "with-structure" : "features-only";
}

Arch parse_arch(const std::string& s) {
  if (s == "gcn") return Arch::Gcn;
  if (s == "sgc") return Arch::Sgc;
  if (s == "mlp") return Arch::Mlp;
  throw ConfigError("unknown architecture '" + s + "' (expected gcn, sgc or mlp)");
}

namespace {

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "with-structure") return EvalMode::WithStructure;
  if (s == "features-only") return EvalMode::FeaturesOnly;
  throw ConfigError("unknown evaluation mode '" + s + "'");
}

std::vector<Tensor*> parameters(Classifier& c) {
  switch (c.arch) {
    case Arch::Gcn: return {&c.gcn.w1, &c.gcn.w2};
    case Arch::Sgc: return {&c.sgc.w};
    case Arch::Mlp: return {&c.mlp.w1, &c.mlp.w2};
  }
  return {};
}

Classifier init_classifier(Arch arch, std::size_t d, std::size_t classes, const TrainHyper& h,
                           std::uint64_t seed) {
  Classifier c;
  c.arch = arch;
  std::mt19937_64 rng(seed);
  switch (arch) {
    case Arch::Gcn:
      c.gcn = models::sample_theta({models::InitKind::GlorotUniform, seed}, d, h.hidden, classes);
      break;
    case Arch::Sgc:
      c.sgc.w = models::sample_weight(models::InitKind::GlorotUniform, d, classes, rng);
      c.sgc.hops = h.sgc_hops;
      break;
    case Arch::Mlp:
      c.mlp.w1 = models::sample_weight(models::InitKind::GlorotUniform, d, h.hidden, rng);
      c.mlp.w2 = models::sample_weight(models::InitKind::GlorotUniform, h.hidden, classes, rng);
      break;
  }
  return c;
}

ad::Var forward(const Classifier& c, const std::shared_ptr<const SparseMatrix>& adj, ad::Var x,
                const std::vector<ad::Var>& w) {
  switch (c.arch) {
    case Arch::Gcn: {
      models::GcnVars v;
      v.w1 = w[0];
      v.w2 = w[1];
      return models::gcn_forward(adj, x, v);
    }
    case Arch::Sgc: return models::sgc_forward(adj, x, w[0], c.sgc.hops);
    case Arch::Mlp: return models::mlp_forward(x, w[0], w[1]);
  }
  throw ConfigError("unknown architecture");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

TrainGraph real_rows(const LabeledGraph& g, std::vector<std::size_t> rows) {
  TrainGraph t;
  t.adj = std::make_shared<SparseMatrix>(normalize_adjacency(g));
  t.features = g.features;
  t.labels = g.labels;
  t.rows = std::move(rows);
  t.num_classes = g.num_classes;
  return t;
}

EvalReport evaluate_on(const TrainGraph& train, const LabeledGraph& real, Arch arch,
                       std::size_t repeats, const TrainHyper& hyper, std::uint64_t seed) {
  EvalReport r;
  r.arch = arch;
  const TrainGraph test = real_rows(real, real.split.test);
  const TrainGraph val = real_rows(real, real.split.val);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < repeats; ++k) {
    const TrainResult fit = train_classifier(train, arch, hyper, derive_seed(seed, 200, k),
                                             val.rows.empty() ? nullptr : &val);
    r.accuracies.push_back(accuracy(fit.model.logits(*test.adj, test.features), test.labels, test.rows));
  }
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.mean = mean_of(r.accuracies);
  r.stddev = stddev_of(r.accuracies);
  return r;
}

}  // namespace

TrainGraph train_graph(const LabeledGraph& g) { return real_rows(g, g.split.train); }

TrainGraph train_graph(const CondensedGraph& g, EvalMode mode) {
  TrainGraph t;
  const std::size_t n = g.features.rows();
  t.adj = std::make_shared<SparseMatrix>(
      normalize_weighted(mode == EvalMode::FeaturesOnly ? Tensor(n, n) : g.adjacency));
  t.features = g.features;
  t.labels = g.labels;
  t.rows.resize(n);
  std::iota(t.rows.begin(), t.rows.end(), 0);
  t.num_classes = g.num_classes;
  return t;
}

Tensor Classifier::logits(const SparseMatrix& adj, const Tensor& x) const {
  switch (arch) {
    case Arch::Gcn: return models::gcn_forward(adj, x, gcn);
    case Arch::Sgc: return models::sgc_forward(adj, x, sgc);
    case Arch::Mlp: return models::mlp_forward(x, mlp);
  }
  throw ConfigError("unknown architecture");
}

TrainResult train_classifier(const TrainGraph& g, Arch arch, const TrainHyper& hyper,
                             std::uint64_t seed, const TrainGraph* validation) {
  if (g.rows.empty()) throw ConfigError("classifier: no training rows");
  TrainResult out;
  Classifier model = init_classifier(arch, g.features.cols(), g.num_classes, hyper, seed);
  const auto mask = std::make_shared<ad::LabelMask>(ad::LabelMask{g.labels, g.rows});
  const auto params = parameters(model);
  std::vector<Tensor> m, v;
  for (Tensor* p : params) {
    m.emplace_back(p->rows(), p->cols());
    v.emplace_back(p->rows(), p->cols());
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  Classifier best = model;
  double best_acc = -1.0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    ad::Tape t;
    std::vector<ad::Var> w;
    for (Tensor* p : params) w.push_back(t.leaf(*p));
    ad::Var loss = ad::softmax_cross_entropy(forward(model, g.adj, t.constant(g.features), w), mask);
    out.loss_trace.push_back(loss.value().item());
    if (!std::isfinite(out.loss_trace.back())) {
      throw NumericError("classifier loss became non-finite at epoch " + std::to_string(epoch));
    }
    const auto grads = ad::grad(loss, w);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(epoch + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(epoch + 1));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto pw = params[k]->values();
      auto gw = grads[k].values();
      auto mk = m[k].values();
      auto vk = v[k].values();
      for (std::size_t i = 0; i < pw.size(); ++i) {
        const double gi = gw[i] + hyper.weight_decay * pw[i];
        mk[i] = b1 * mk[i] + (1.0 - b1) * gi;
        vk[i] = b2 * vk[i] + (1.0 - b2) * gi * gi;
        pw[i] -= hyper.lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
      }
    }
    if (validation) {
      const double acc = accuracy(model.logits(*validation->adj, validation->features),
                                  validation->labels, validation->rows);
      if (acc > best_acc) {
        best_acc = acc;
        best = model;
        out.best_epoch = epoch + 1;
      }
    }
  }
  out.model = validation && hyper.epochs > 0 ? best : model;
  if (!validation) out.best_epoch = hyper.epochs;
  return out;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ConfigError("accuracy: no rows to score");
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(r, k) > logits(r, arg)) arg = k;
    if (static_cast<int>(arg) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

EvalReport evaluate_condensed(const CondensedGraph& condensed, const LabeledGraph& real, Arch arch,
                              std::size_t repeats, EvalMode mode, const TrainHyper& hyper,
                              std::uint64_t seed) {
  if (condensed.features.cols() != real.num_features) {
    throw ConfigError("condensed graph has " + std::to_string(condensed.features.cols()) +
                      " features, the real graph " + std::to_string(real.num_features));
  }
  std::vector<char> present(real.num_classes, 0);
  for (int y : condensed.labels)
    if (static_cast<std::size_t>(y) < present.size()) present[static_cast<std::size_t>(y)] = 1;
  std::vector<std::string> warnings;
  std::vector<char> warned(real.num_classes, 0);
  for (std::size_t i : real.split.test) {
    const auto c = static_cast<std::size_t>(real.labels[i]);
    if (!present[c] && !warned[c]) {
      warned[c] = 1;
      warnings.push_back("class " + std::to_string(c) +
                         " appears in the real test split but not in the condensed labels");
    }
  }
  TrainGraph train = train_graph(condensed, mode);
  train.num_classes = std::max(train.num_classes, real.num_classes);
  EvalReport r = evaluate_on(train, real, arch, repeats, hyper, seed);
  r.mode = mode;
  r.warnings = std::move(warnings);
  return r;
}

EvalReport evaluate_condensed(const fs::path& dir, const LabeledGraph& real, Arch arch,
                              std::size_t repeats, EvalMode mode, const TrainHyper& hyper,
                              std::uint64_t seed) {
  EvalReport r = evaluate_condensed(load_condensed(dir), real, arch, repeats, mode, hyper, seed);
  r.bytes = directory_bytes(dir);
  return r;
}

EvalReport evaluate_full(const LabeledGraph& real, Arch arch, std::size_t repeats,
                         const TrainHyper& hyper, std::uint64_t seed) {
  return evaluate_on(train_graph(real), real, arch, repeats, hyper, seed);
}

std::vector<EvalReport> transfer_eval(const CondensedGraph& condensed, const LabeledGraph& real,
                                      const std::vector<Arch>& archs, std::size_t repeats,
                                      const TrainHyper& hyper, std::uint64_t seed) {
  std::vector<EvalReport> out;
  for (Arch a : archs) {
    out.push_back(evaluate_condensed(condensed, real, a, repeats, EvalMode::WithStructure, hyper, seed));
  }
  return out;
}

std::string to_json(const EvalReport& r) {
  json j = {{"arch", to_string(r.arch)},         {"mode", to_string(r.mode)},
            {"accuracies", r.accuracies},        {"mean", r.mean},
            {"std", r.stddev},                   {"train_seconds", r.train_seconds},
            {"bytes", r.bytes},                  {"warnings", r.warnings}};
  return j.dump(2);
}

// ---- configuration files ----

namespace {

const std::vector<std::string> kRunKeys = {"data", "out", "dataset", "method", "arch",
                                           "eval_mode", "repeats", "features_only"};

void apply_config(CondenseConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (std::find(kRunKeys.begin(), kRunKeys.end(), key) != kRunKeys.end()) continue;
      if (key == "ratio") cfg.ratio = value.get<double>();
      else if (key == "mode") cfg.mode = parse_mode(value.get<std::string>());
      else if (key == "backbone_loop") cfg.backbone_loop = parse_backbone_loop(value.get<std::string>());
      else if (key == "k" || key == "blocks") cfg.blocks = value.get<std::size_t>();
      else if (key == "kappa") cfg.kappa = value.get<double>();
      else if (key == "selection_period") cfg.selection_period = value.get<std::size_t>();
      else if (key == "explainer") cfg.explainer = parse_explainer(value.get<std::string>());
      else if (key == "literal_mset") cfg.literal_mset = value.get<bool>();
      else if (key == "lambda") cfg.lambda = value.get<double>();
      else if (key == "r" || key == "info_rate") cfg.info_rate = value.get<double>();
      else if (key == "beta") cfg.beta = value.get<double>();
      else if (key == "explainer_steps") cfg.explainer_steps = value.get<std::size_t>();
      else if (key == "explainer_lr") cfg.explainer_lr = value.get<double>();
      else if (key == "mask_distance") cfg.mask_distance = parse_mask_distance(value.get<std::string>());
      else if (key == "optimizer") cfg.optimizer = parse_optimizer(value.get<std::string>());
      else if (key == "lr_features") cfg.lr_features = value.get<double>();
      else if (key == "lr_adjgen") cfg.lr_adjgen = value.get<double>();
      else if (key == "lr_theta") cfg.lr_theta = value.get<double>();
      else if (key == "theta_steps") cfg.theta_steps = value.get<std::size_t>();
      else if (key == "feature_steps") cfg.feature_steps = value.get<std::size_t>();
      else if (key == "adjgen_steps") cfg.adjgen_steps = value.get<std::size_t>();
      else if (key == "theta_draws") cfg.theta_draws = value.get<std::size_t>();
      else if (key == "refresh_period") cfg.refresh_period = value.get<std::size_t>();
      else if (key == "monitor_draws") cfg.monitor_draws = value.get<std::size_t>();
      else if (key == "max_epochs") cfg.max_epochs = value.get<std::size_t>();
      else if (key == "patience") cfg.patience = value.get<std::size_t>();
      else if (key == "min_delta") cfg.min_delta = value.get<double>();
      else if (key == "hidden") cfg.hidden = value.get<std::size_t>();
      else if (key == "adjgen_hidden") cfg.adjgen_hidden = value.get<std::size_t>();
      else if (key == "use_bias") cfg.use_bias = value.get<bool>();
      else if (key == "init") {
        const auto s = value.get<std::string>();
        if (s == "glorot") cfg.init = models::InitKind::GlorotUniform;
        else if (s == "kaiming") cfg.init = models::InitKind::KaimingNormal;
        else throw ConfigError("unknown init '" + s + "' (expected glorot or kaiming)");
      } else if (key == "threshold") cfg.threshold = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ConfigError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

void apply_config_json(CondenseConfig& cfg, const std::string& json_text) {
  apply_config(cfg, parse_json_text(json_text, "config"));
}

// ---- benchmark ----

std::vector<BenchmarkCell> load_grid(const fs::path& file) {
  const json grid = parse_json_text(text::read_file(file), file.filename().string());
  const json defaults = grid.value("defaults", json::object());
  if (!grid.contains("cells") || !grid["cells"].is_array()) {
    throw ConfigError(file.filename().string() + ": expected a 'cells' array");
  }
  std::vector<BenchmarkCell> cells;
  for (const auto& c : grid["cells"]) {
    json merged = defaults;
    merged.update(c);
    BenchmarkCell cell;
    apply_config(cell.config, merged);
    try {
      fs::path data = merged.at("dataset").get<std::string>();
      if (data.is_relative()) data = file.parent_path() / data;
      cell.dataset = data.string();
      cell.method = merged.value("method", to_string(cell.config.mode));
      cell.arch = parse_arch(merged.value("arch", std::string("gcn")));
      cell.mode = parse_eval_mode(merged.value("eval_mode", std::string("with-structure")));
      cell.repeats = merged.value("repeats", std::size_t{3});
    } catch (const json::exception& e) {
      throw ConfigError(file.filename().string() + ": " + e.what());
    }
    if (cell.method == "gcond" || cell.method == "mgcond" || cell.method == "exgc") {
      cell.config.mode = parse_mode(cell.method);
    } else if (cell.method != "random" && cell.method != "herding" && cell.method != "kcenter") {
      throw ConfigError("unknown method '" + cell.method + "'");
    }
    cell.config.validate();
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkCell>& cells, const fs::path& out,
                                        std::size_t jobs) {
  fs::create_directories(out);
  std::map<std::string, LabeledGraph> datasets;
  for (const auto& c : cells)
    if (!datasets.count(c.dataset)) datasets.emplace(c.dataset, load_graph(c.dataset).graph);

  std::vector<BenchmarkRow> rows(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      try {
        const BenchmarkCell& cell = cells[i];
        const LabeledGraph& g = datasets.at(cell.dataset);
        const fs::path dir = out / "cells" / (std::to_string(i) + "-" + cell.method);
        BenchmarkRow row;
        row.dataset = fs::path(cell.dataset).filename().string();
        row.method = cell.method;
        row.ratio = cell.config.ratio;
        row.arch = cell.arch;
        row.mode = cell.mode;
        const auto start = std::chrono::steady_clock::now();
        if (cell.method == "random" || cell.method == "herding" || cell.method == "kcenter") {
          const CoresetResult r = cell.method == "random"    ? random_select(g, cell.config.ratio, cell.config.seed)
                                  : cell.method == "herding" ? herding_select(g, cell.config.ratio)
                                                             : kcenter_select(g, cell.config.ratio, cell.config.seed);
          save_condensed(condensed_from_subgraph(coreset_graph(g, r)), dir);
        } else {
          const MatchReport rep = condense(g, cell.config);
          save_condensed(rep.state, cell.config.threshold, dir);
          save_trace(rep.trace, dir / "trace.csv");
          row.epochs = rep.convergence_epoch;
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row.eval = evaluate_condensed(dir, g, cell.arch, cell.repeats, cell.mode, TrainHyper{},
                                      cell.config.seed);
        row.bytes = row.eval.bytes;
        rows[i] = std::move(row);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& row : rows) {
    if (row.method != "exgc" && row.method != "mgcond" && row.method != "gcond") continue;
    for (const auto& ref : rows) {
      if (ref.method == "gcond" && ref.dataset == row.dataset && ref.ratio == row.ratio &&
          row.seconds > 0.0) {
        row.speedup = ref.seconds / row.seconds;
        break;
      }
    }
  }
  write_report(rows, out);
  return rows;
}

void write_report(const std::vector<BenchmarkRow>& rows, const fs::path& out) {
  fs::create_directories(out);
  std::string csv = "dataset,method,ratio,arch,mode,acc_mean,acc_std,epochs,seconds,bytes,speedup\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv += r.dataset + ',' + r.method + ',' + text::format_double(r.ratio) + ',' + to_string(r.arch) +
           ',' + to_string(r.mode) + ',' + text::format_double(r.eval.mean) + ',' +
           text::format_double(r.eval.stddev) + ',' + std::to_string(r.epochs) + ',' +
           text::format_double(r.seconds) + ',' + std::to_string(r.bytes) + ',' +
           (r.speedup ? text::format_double(*r.speedup) : std::string()) + '\n';
    json j = {{"dataset", r.dataset},          {"method", r.method},
              {"ratio", r.ratio},              {"arch", to_string(r.arch)},
              {"mode", to_string(r.mode)},     {"acc_mean", r.eval.mean},
              {"acc_std", r.eval.stddev},      {"accuracies", r.eval.accuracies},
              {"epochs", r.epochs},            {"seconds", r.seconds},
              {"bytes", r.bytes},              {"warnings", r.eval.warnings}};
    j["speedup"] = r.speedup ? json(*r.speedup) : json(nullptr);
    arr.push_back(std::move(j));
  }
  text::write_file(out / "report.csv", csv);
  text::write_file(out / "report.json", json{{"rows", arr}}.dump(2) + "\n");
}

}  // namespace exgc
