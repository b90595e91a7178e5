#include "exgc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "exgc/error.hpp"
#include "text_io.hpp"

namespace exgc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::GCond: return "gcond";
    case Mode::MGCond: return "mgcond";
    case Mode::Exgc: return "exgc";
  }
  return "?";
}

std::string to_string(BackboneLoop b) {
  return b == BackboneLoop::InnerLoop ? "inner-loop" : "one-step";
}

std::string to_string(ExplainerKind e) {
  switch (e) {
    case ExplainerKind::Sa: return "sa";
    case ExplainerKind::LocalMask: return "local_mask";
    case ExplainerKind::GlobalMask: return "global_mask";
    case ExplainerKind::Random: return "random";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "gcond") return Mode::GCond;
  if (s == "mgcond") return Mode::MGCond;
  if (s == "exgc") return Mode::Exgc;
  throw ConfigError("unknown mode '" + s + "' (expected gcond, mgcond or exgc)");
}

BackboneLoop parse_backbone_loop(const std::string& s) {
  if (s == "inner-loop") return BackboneLoop::InnerLoop;
  if (s == "one-step") return BackboneLoop::OneStep;
  throw ConfigError("unknown backbone loop '" + s + "' (expected inner-loop or one-step)");
}

ExplainerKind parse_explainer(const std::string& s) {
  if (s == "sa") return ExplainerKind::Sa;
  if (s == "local_mask") return ExplainerKind::LocalMask;
  if (s == "global_mask") return ExplainerKind::GlobalMask;
  if (s == "random") return ExplainerKind::Random;
  throw ConfigError("unknown explainer '" + s +
                    "' (expected sa, local_mask, global_mask or random)");
}

MaskDistance parse_mask_distance(const std::string& s) {
  if (s == "mse") return MaskDistance::Mse;
  if (s == "softmax_kl") return MaskDistance::SoftmaxKl;
  throw ConfigError("unknown mask distance '" + s + "' (expected mse or softmax_kl)");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void CondenseConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in (0, 1]");
  if (!(info_rate > 0.0 && info_rate < 1.0)) throw ConfigError("info rate r must lie in (0, 1)");
  if (blocks < 1) throw ConfigError("block count K must be >= 1");
  if (selection_period < 1) throw ConfigError("selection period must be >= 1");
  if (!(lr_features > 0.0) || !(lr_adjgen > 0.0) || !(lr_theta > 0.0) || !(explainer_lr > 0.0)) {
    throw ConfigError("step sizes must be positive");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (theta_draws < 1) throw ConfigError("theta draws must be >= 1");
  if (refresh_period < 1) throw ConfigError("refresh period must be >= 1");
  if (hidden < 1 || adjgen_hidden < 1) throw ConfigError("hidden widths must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
}

void SyntheticState::validate() const {
  const std::size_t n = size();
  if (labels.size() != n) throw Error("state: label count differs from feature rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw Error("state: label out of range");
  }
  if (!features.all_finite()) throw NumericError("state: non-finite synthetic feature");
  if (!blocks.empty()) {
    std::vector<int> seen(n, 0);
    for (const auto& b : blocks)
      for (std::size_t i : b) {
        if (i >= n) throw Error("state: block index out of range");
        ++seen[i];
      }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
      throw Error("state: blocks do not partition the synthetic nodes");
    }
  }
  if (!candidates.empty() || !active.empty()) {
    std::vector<int> seen(n, 0);
    for (std::size_t i : candidates) {
      if (i >= n) throw Error("state: candidate index out of range");
      ++seen[i];
    }
    for (std::size_t i : active) {
      if (i >= n) throw Error("state: active index out of range");
      ++seen[i];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
      throw Error("state: candidate and active sets do not partition the synthetic nodes");
    }
  }
}

std::vector<std::size_t> proportional_counts(const std::vector<int>& train_labels,
                                             std::size_t num_classes, std::size_t total) {
  if (num_classes == 0) throw ConfigError("no classes");
  if (total < num_classes) {
    throw ConfigError("ratio too small: " + std::to_string(total) + " synthetic nodes for " +
                      std::to_string(num_classes) + " classes");
  }
  std::vector<std::size_t> freq(num_classes, 0);
  for (int y : train_labels) ++freq[static_cast<std::size_t>(y)];
  const double n = static_cast<double>(train_labels.size());
  if (train_labels.empty()) throw ConfigError("empty train split");

  std::vector<std::size_t> counts(num_classes);
  std::vector<double> rem(num_classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double quota = static_cast<double>(total) * static_cast<double>(freq[c]) / n;
    counts[c] = static_cast<std::size_t>(std::floor(quota));
    rem[c] = quota - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % num_classes]];

  // every class gets a node, taken from the currently largest class
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] > 0) continue;
    const auto largest = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    --counts[largest];
    counts[c] = 1;
  }
  return counts;
}

std::size_t synthetic_size(const LabeledGraph& g, double ratio) {
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(g.num_nodes)));
  return std::min(n, g.split.train.size());
}

ad::Var synthetic_logits(ad::Var x, const models::AdjGenVars& phi, const models::GcnVars& theta) {
  return models::gcn_forward(normalize_adjacency(models::adjgen_forward(x, phi)), x, theta);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a combination of the three inputs
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---- condensed-graph directory ----

namespace {

json tensor_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
    rows.push_back(std::move(row));
  }
  return {{"shape", {t.rows(), t.cols()}}, {"data", std::move(rows)}};
}

Tensor tensor_from_json(const json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw FormatError("phi.json: tensor '" + name + "' needs a 2-d shape");
  Tensor t(shape[0], shape[1]);
  const json& data = j.at("data");
  if (data.size() != shape[0]) throw FormatError("phi.json: tensor '" + name + "' row count");
  for (std::size_t i = 0; i < shape[0]; ++i) {
    if (data[i].size() != shape[1]) throw FormatError("phi.json: tensor '" + name + "' column count");
    for (std::size_t j2 = 0; j2 < shape[1]; ++j2) t(i, j2) = data[i][j2].get<double>();
  }
  return t;
}

const char* const kPhiNames[4] = {"w1", "b1", "w2", "b2"};

json read_json(const fs::path& file) {
  try {
    return json::parse(text::read_file(file));
  } catch (const json::exception& e) {
    throw FormatError(file.filename().string() + ": " + e.what());
  }
}

}  // namespace

CondensedGraph condensed_from_state(const SyntheticState& state, double threshold) {
  CondensedGraph g;
  g.features = state.features;
  g.labels = state.labels;
  g.num_classes = state.num_classes;
  g.adjacency = models::sparsify(models::adjgen_forward(state.features, state.phi), threshold);
  g.phi = state.phi;
  g.threshold = threshold;
  return g;
}

CondensedGraph condensed_from_subgraph(const LabeledGraph& sub) {
  CondensedGraph g;
  g.features = sub.features;
  g.labels = sub.labels;
  g.num_classes = sub.num_classes;
  g.adjacency = Tensor(sub.num_nodes, sub.num_nodes);
  for (const auto& [u, v] : sub.edges) g.adjacency(u, v) = g.adjacency(v, u) = 1.0;
  g.threshold = 0.5;
  return g;
}

void save_condensed(const CondensedGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t n = g.features.rows();
  const bool self_affinity = n > 0 && g.adjacency(0, 0) != 0.0;
  json meta = {{"format_version", 1},
               {"num_nodes", n},
               {"num_features", g.features.cols()},
               {"num_classes", g.num_classes},
               {"threshold", g.threshold},
               {"self_affinity", self_affinity}};
  text::write_file(dir / "meta.json", meta.dump(2) + "\n");

  std::string feats;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < g.features.cols(); ++j) {
      if (j) feats += '\t';
      feats += text::format_double(g.features(i, j));
    }
    feats += '\n';
  }
  text::write_file(dir / "features.tsv", feats);

  std::string labels;
  for (int y : g.labels) labels += std::to_string(y) + "\n";
  text::write_file(dir / "labels.tsv", labels);

  std::string adj;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = g.adjacency(i, j);
      if (w != 0.0 && w >= g.threshold) {
        adj += std::to_string(i) + '\t' + std::to_string(j) + '\t' + text::format_double(w) + '\n';
      }
    }
  text::write_file(dir / "adj.tsv", adj);

  const fs::path phi_path = dir / "phi.json";
  if (g.phi) {
    json tensors = json::object();
    const auto t = g.phi->tensors();
    for (std::size_t k = 0; k < 4; ++k) tensors[kPhiNames[k]] = tensor_json(t[k]);
    json phi = {{"format_version", 1}, {"tensors", std::move(tensors)}};
    text::write_file(phi_path, phi.dump() + "\n");
  } else if (fs::exists(phi_path)) {
    fs::remove(phi_path);
  }
}

void save_condensed(const SyntheticState& state, double threshold, const fs::path& dir) {
  save_condensed(condensed_from_state(state, threshold), dir);
}

CondensedGraph load_condensed(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  if (meta.value("format_version", 0) != 1) throw FormatError("meta.json: unsupported format_version");
  CondensedGraph g;
  std::size_t n = 0, d = 0;
  bool self_affinity = false;
  try {
    n = meta.at("num_nodes").get<std::size_t>();
    d = meta.at("num_features").get<std::size_t>();
    g.num_classes = meta.at("num_classes").get<std::size_t>();
    g.threshold = meta.value("threshold", 0.5);
    self_affinity = meta.value("self_affinity", false);
  } catch (const json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }

  const fs::path feat_path = dir / "features.tsv";
  const auto feat_lines = text::read_lines(feat_path);
  if (feat_lines.size() != n) throw FormatError("features.tsv: row count differs from meta.json");
  g.features = Tensor(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = text::split_tabs(feat_lines[i]);
    if (fields.size() != d) {
      throw FormatError(text::location(feat_path, i + 1) + ": dimension mismatch");
    }
    for (std::size_t j = 0; j < d; ++j) g.features(i, j) = text::parse_double(fields[j], feat_path, i + 1);
  }

  const fs::path label_path = dir / "labels.tsv";
  const auto label_lines = text::read_lines(label_path);
  if (label_lines.size() != n) throw FormatError("labels.tsv: row count differs from meta.json");
  for (std::size_t i = 0; i < n; ++i) {
    const long long y = text::parse_int(label_lines[i], label_path, i + 1);
    if (y < 0 || static_cast<std::size_t>(y) >= g.num_classes) {
      throw FormatError(text::location(label_path, i + 1) + ": label out of range");
    }
    g.labels.push_back(static_cast<int>(y));
  }

  g.adjacency = Tensor(n, n);
  if (self_affinity)
    for (std::size_t i = 0; i < n; ++i) g.adjacency(i, i) = 1.0;
  const fs::path adj_path = dir / "adj.tsv";
  const auto adj_lines = text::read_lines(adj_path);
  for (std::size_t k = 0; k < adj_lines.size(); ++k) {
    const auto fields = text::split_tabs(adj_lines[k]);
    if (fields.size() != 3) throw FormatError(text::location(adj_path, k + 1) + ": expected 'i<TAB>j<TAB>w'");
    const long long i = text::parse_int(fields[0], adj_path, k + 1);
    const long long j = text::parse_int(fields[1], adj_path, k + 1);
    const double w = text::parse_double(fields[2], adj_path, k + 1);
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n || static_cast<std::size_t>(j) >= n) {
      throw FormatError(text::location(adj_path, k + 1) + ": index out of range");
    }
    if (!(w >= 0.0) || !std::isfinite(w)) throw FormatError(text::location(adj_path, k + 1) + ": bad weight");
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
    g.adjacency(a, b) = g.adjacency(b, a) = w;
  }

  const fs::path phi_path = dir / "phi.json";
  if (fs::exists(phi_path)) {
    const json phi = read_json(phi_path);
    try {
      std::vector<Tensor> t;
      for (const char* name : kPhiNames) t.push_back(tensor_from_json(phi.at("tensors").at(name), name));
      models::AdjGenParams p;
      p.assign(std::move(t));
      if (p.w1.rows() != 2 * d) throw FormatError("phi.json: generator width does not match features");
      g.phi = std::move(p);
    } catch (const json::exception& e) {
      throw FormatError("phi.json: " + std::string(e.what()));
    }
  }
  return g;
}

SyntheticState load_condensed_state(const fs::path& dir) {
  CondensedGraph g = load_condensed(dir);
  if (!g.phi) throw FormatError(dir.string() + ": no phi.json, not a synthetic graph");
  SyntheticState s;
  s.features = std::move(g.features);
  s.labels = std::move(g.labels);
  s.num_classes = g.num_classes;
  s.phi = std::move(*g.phi);
  return s;
}

std::uintmax_t directory_bytes(const fs::path& dir) {
  std::uintmax_t total = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) total += e.file_size();
  return total;
}

}  // namespace exgc
