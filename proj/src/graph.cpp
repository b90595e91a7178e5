#include "exgc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <string>

#include "exgc/error.hpp"
#include "text_io.hpp"

namespace exgc {

namespace fs = std::filesystem;
using nlohmann::json;

void LabeledGraph::validate() const {
  if (features.rows() != num_nodes || features.cols() != num_features) {
    throw ConfigError("graph: features shape does not match num_nodes x num_features");
  }
  if (labels.size() != num_nodes) throw ConfigError("graph: label count differs from num_nodes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("graph: label out of range");
    }
  }
  if (!features.all_finite()) throw ConfigError("graph: non-finite feature value");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) throw ConfigError("graph: edge endpoint out of range");
    if (u == v) throw ConfigError("graph: self-loop stored in edge set");
    if (u > v) throw ConfigError("graph: edge not stored as (min, max)");
    if (!seen.insert({u, v}).second) throw ConfigError("graph: duplicate edge");
  }
  if (split.train.empty()) throw ConfigError("graph: empty train split");
  std::vector<int> owner(num_nodes, -1);
  const std::vector<std::size_t>* parts[] = {&split.train, &split.val, &split.test};
  for (int p = 0; p < 3; ++p) {
    for (std::size_t i : *parts[p]) {
      if (i >= num_nodes) throw ConfigError("graph: split index out of range");
      if (owner[i] != -1) throw ConfigError("graph: split lists are not disjoint");
      owner[i] = p;
    }
  }
}

namespace {

std::vector<std::size_t> index_array(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw FormatError(file.filename().string() + ": missing array '" + key + "'");
  }
  std::vector<std::size_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw FormatError(file.filename().string() + ": non-index entry in '" + key + "'");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::size_t meta_count(const json& meta, const char* key, const fs::path& file) {
  if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<long long>() < 0) {
    throw FormatError(file.filename().string() + ": missing or invalid '" + key + "'");
  }
  return meta[key].get<std::size_t>();
}

}  // namespace

LoadedGraph load_graph(const fs::path& dir) {
  LoadedGraph out;
  LabeledGraph& g = out.graph;

  const fs::path meta_path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(text::read_file(meta_path));
  } catch (const json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  if (meta.value("format_version", 1) != 1) throw FormatError("meta.json: unsupported format_version");
  g.num_nodes = meta_count(meta, "num_nodes", meta_path);
  g.num_features = meta_count(meta, "num_features", meta_path);
  g.num_classes = meta_count(meta, "num_classes", meta_path);

  // features
  const fs::path feat_path = dir / "features.tsv";
  const auto feat_lines = text::read_lines(feat_path);
  if (feat_lines.size() != g.num_nodes) {
    throw FormatError("features.tsv: " + std::to_string(feat_lines.size()) +
                      " rows but meta.json declares " + std::to_string(g.num_nodes));
  }
  g.features = Tensor(g.num_nodes, g.num_features);
  for (std::size_t i = 0; i < feat_lines.size(); ++i) {
    const auto fields = text::split_tabs(feat_lines[i]);
    if (fields.size() != g.num_features) {
      throw FormatError(text::location(feat_path, i + 1) + ": dimension mismatch, expected " +
                        std::to_string(g.num_features) + " values, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const double v = text::parse_double(fields[j], feat_path, i + 1);
      if (!std::isfinite(v)) {
        throw FormatError(text::location(feat_path, i + 1) + ": non-finite feature");
      }
      g.features(i, j) = v;
    }
  }

  // labels
  const fs::path label_path = dir / "labels.tsv";
  const auto label_lines = text::read_lines(label_path);
  if (label_lines.size() != g.num_nodes) {
    throw FormatError("labels.tsv: " + std::to_string(label_lines.size()) +
                      " rows but meta.json declares " + std::to_string(g.num_nodes));
  }
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const long long y = text::parse_int(label_lines[i], label_path, i + 1);
    if (y < 0 || static_cast<std::size_t>(y) >= g.num_classes) {
      throw FormatError(text::location(label_path, i + 1) + ": label out of range (" +
                        std::to_string(y) + ")");
    }
    g.labels.push_back(static_cast<int>(y));
  }

  // edges
  const fs::path edge_path = dir / "edges.tsv";
  std::set<std::pair<std::size_t, std::size_t>> seen;
  const auto edge_lines = text::read_lines(edge_path);
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    if (edge_lines[i].empty()) continue;
    const auto fields = text::split_tabs(edge_lines[i]);
    if (fields.size() != 2) {
      throw FormatError(text::location(edge_path, i + 1) + ": expected 'u<TAB>v'");
    }
    const long long u = text::parse_int(fields[0], edge_path, i + 1);
    const long long v = text::parse_int(fields[1], edge_path, i + 1);
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= g.num_nodes ||
        static_cast<std::size_t>(v) >= g.num_nodes) {
      throw FormatError(text::location(edge_path, i + 1) + ": edge endpoint out of range");
    }
    if (u == v) {
      ++out.report.self_loops;
      continue;
    }
    const std::size_t a = static_cast<std::size_t>(u), b = static_cast<std::size_t>(v);
    const std::pair<std::size_t, std::size_t> key{std::min(a, b), std::max(a, b)};
    if (!seen.insert(key).second) {
      ++out.report.duplicate_edges;
      continue;
    }
    g.edges.emplace_back(key.first, key.second);
  }

  // splits
  const fs::path split_path = dir / "splits.json";
  json splits;
  try {
    splits = json::parse(text::read_file(split_path));
  } catch (const json::exception& e) {
    throw FormatError("splits.json: " + std::string(e.what()));
  }
  g.split.train = index_array(splits, "train", split_path);
  g.split.val = index_array(splits, "val", split_path);
  g.split.test = index_array(splits, "test", split_path);

  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return out;
}

void save_graph(const LabeledGraph& g, const fs::path& dir) {
  g.validate();
  fs::create_directories(dir);
  json meta = {{"num_nodes", g.num_nodes},
               {"num_features", g.num_features},
               {"num_classes", g.num_classes},
               {"format_version", 1}};
  text::write_file(dir / "meta.json", meta.dump() + "\n");

  std::string edges;
  for (auto [u, v] : g.edges) edges += std::to_string(u) + "\t" + std::to_string(v) + "\n";
  text::write_file(dir / "edges.tsv", edges);

  std::string feats;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t j = 0; j < g.num_features; ++j) {
      if (j) feats += '\t';
      feats += text::format_double(g.features(i, j));
    }
    feats += '\n';
  }
  text::write_file(dir / "features.tsv", feats);

  std::string labels;
  for (int y : g.labels) labels += std::to_string(y) + "\n";
  text::write_file(dir / "labels.tsv", labels);

  json splits = {{"train", g.split.train}, {"val", g.split.val}, {"test", g.split.test}};
  text::write_file(dir / "splits.json", splits.dump() + "\n");
}

SparseMatrix normalize_adjacency(std::size_t n,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<double> degree(n, 1.0);  // self-loop
  for (auto [u, v] : edges) {
    if (u == v) continue;
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) dinv[i] = 1.0 / std::sqrt(degree[i]);
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(n + 2 * edges.size());
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, dinv[i] * dinv[i]});
  for (auto [u, v] : edges) {
    if (u == v) continue;
    const double w = dinv[u] * dinv[v];
    t.push_back({u, v, w});
    t.push_back({v, u, w});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

SparseMatrix normalize_adjacency(const LabeledGraph& g) {
  return normalize_adjacency(g.num_nodes, g.edges);
}

namespace {

void check_adjacency(const Tensor& a) {
  if (a.rows() != a.cols()) throw ShapeError("adjacency must be square");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (a(i, j) < 0.0) throw ConfigError("adjacency has a negative weight");
      if (a(i, j) != a(j, i)) throw ConfigError("adjacency is not symmetric");
    }
  }
}

}  // namespace

Tensor normalize_adjacency(const Tensor& dense) {
  check_adjacency(dense);
  const std::size_t n = dense.rows();
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (double v : dense.row(i)) d += v;
    dinv[i] = 1.0 / std::sqrt(d);
  }
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (dense(i, j) + (i == j ? 1.0 : 0.0)) * dinv[i] * dinv[j];
  return out;
}

ad::Var normalize_adjacency(ad::Var dense) {
  check_adjacency(dense.value());
  const std::size_t n = dense.rows();
  ad::Tape& tape = *dense.tape();
  ad::Var with_loops = dense + tape.constant(Tensor::identity(n));
  ad::Var dinv = ad::pow(ad::row_sum(with_loops), -0.5);
  return ad::hadamard(with_loops, ad::matmul(dinv, ad::transpose(dinv)));
}

SparseMatrix normalize_weighted(const Tensor& dense) {
  check_adjacency(dense);
  const std::size_t n = dense.rows();
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (double v : dense.row(i)) d += v;
    dinv[i] = 1.0 / std::sqrt(d);
  }
  std::vector<SparseMatrix::Triplet> t;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = dense(i, j) + (i == j ? 1.0 : 0.0);
      if (w != 0.0) t.push_back({i, j, w * dinv[i] * dinv[j]});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

void SbmParams::validate() const {
  if (num_classes < 1 || nodes_per_class < 1) throw ConfigError("sbm: need at least one node and class");
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) {
    throw ConfigError("sbm: require 0 <= p_out < p_in <= 1");
  }
  if (feature_dim < num_classes) throw ConfigError("sbm: feature_dim must be >= num_classes");
  if (!(class_mean_separation >= 0.0)) throw ConfigError("sbm: separation must be >= 0");
  if (!(feature_noise > 0.0)) throw ConfigError("sbm: feature_noise must be > 0");
  double total = 0.0;
  for (double f : split_fractions) {
    if (f < 0.0) throw ConfigError("sbm: negative split fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("sbm: split fractions must sum to 1");
  if (split_fractions[0] * static_cast<double>(nodes_per_class) < 1.0) {
    throw ConfigError("sbm: train fraction leaves a class without train nodes");
  }
}

LabeledGraph generate_sbm(const SbmParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledGraph g;
  g.num_classes = params.num_classes;
  g.num_features = params.feature_dim;
  g.num_nodes = params.nodes_per_class * params.num_classes;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    g.labels.push_back(static_cast<int>(i / params.nodes_per_class));
  }

  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t j = i + 1; j < g.num_nodes; ++j) {
      const double p = g.labels[i] == g.labels[j] ? params.p_in : params.p_out;
      if (unit(rng) < p) g.edges.emplace_back(i, j);
    }
  }

  // Gram-Schmidt on Gaussian vectors gives a random orthonormal set.
  const std::size_t d = params.feature_dim;
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < params.num_classes) {
    std::vector<double> v(d);
    for (double& x : v) x = normal(rng);
    for (const auto& u : dirs) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += v[k] * u[k];
      for (std::size_t k = 0; k < d; ++k) v[k] -= dot * u[k];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }

  g.features = Tensor(g.num_nodes, d);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const auto& mean = dirs[static_cast<std::size_t>(g.labels[i])];
    for (std::size_t k = 0; k < d; ++k) {
      g.features(i, k) = params.class_mean_separation * mean[k] + params.feature_noise * normal(rng);
    }
  }

  for (std::size_t c = 0; c < params.num_classes; ++c) {
    std::vector<std::size_t> members(params.nodes_per_class);
    for (std::size_t k = 0; k < members.size(); ++k) members[k] = c * params.nodes_per_class + k;
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::floor(params.split_fractions[0] * n));
    const auto n_val = static_cast<std::size_t>(std::floor(params.split_fractions[1] * n));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_train) {
        g.split.train.push_back(members[k]);
      } else if (k < n_train + n_val) {
        g.split.val.push_back(members[k]);
      } else {
        g.split.test.push_back(members[k]);
      }
    }
  }
  std::sort(g.split.train.begin(), g.split.train.end());
  std::sort(g.split.val.begin(), g.split.val.end());
  std::sort(g.split.test.begin(), g.split.test.end());
  g.validate();
  return g;
}

LabeledGraph induced_subgraph(const LabeledGraph& g, const std::vector<std::size_t>& nodes) {
  LabeledGraph sub;
  sub.num_nodes = nodes.size();
  sub.num_features = g.num_features;
  sub.num_classes = g.num_classes;
  sub.features = Tensor(nodes.size(), g.num_features);
  std::map<std::size_t, std::size_t> position;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const std::size_t i = nodes[k];
    if (i >= g.num_nodes) throw ConfigError("induced_subgraph: node out of range");
    if (!position.emplace(i, k).second) throw ConfigError("induced_subgraph: repeated node");
    std::copy(g.features.row(i).begin(), g.features.row(i).end(), sub.features.row(k).begin());
    sub.labels.push_back(g.labels[i]);
    sub.split.train.push_back(k);
  }
  for (auto [u, v] : g.edges) {
    auto iu = position.find(u);
    auto iv = position.find(v);
    if (iu == position.end() || iv == position.end()) continue;
    sub.edges.push_back(std::minmax(iu->second, iv->second));
  }
  std::sort(sub.edges.begin(), sub.edges.end());
  return sub;
}

}  // namespace exgc
