#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "exgc/coreset.hpp"
#include "exgc/error.hpp"
#include "exgc/explainers.hpp"
#include "exgc/harness.hpp"
#include "exgc/matching.hpp"
#include "exgc/tape.hpp"

namespace py = pybind11;
using namespace exgc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

std::vector<Tensor> from_numpy_list(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  for (const auto& a : arrays) out.push_back(from_numpy(a));
  return out;
}

py::dict eval_dict(const EvalReport& r) {
  py::dict d;
  d["arch"] = to_string(r.arch);
  d["mode"] = to_string(r.mode);
  d["accuracies"] = r.accuracies;
  d["mean"] = r.mean;
  d["std"] = r.stddev;
  d["train_seconds"] = r.train_seconds;
  d["bytes"] = r.bytes;
  d["warnings"] = r.warnings;
  return d;
}

TrainHyper hyper_with(std::size_t epochs) {
  TrainHyper h;
  h.epochs = epochs;
  return h;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph condensation by gradient matching";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const FormatError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const Error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  py::class_<LabeledGraph>(m, "Graph")
      .def_readonly("num_nodes", &LabeledGraph::num_nodes)
      .def_readonly("num_features", &LabeledGraph::num_features)
      .def_readonly("num_classes", &LabeledGraph::num_classes)
      .def_readonly("labels", &LabeledGraph::labels)
      .def_readonly("edges", &LabeledGraph::edges)
      .def_property_readonly("features", [](const LabeledGraph& g) { return to_numpy(g.features); })
      .def_property_readonly("train", [](const LabeledGraph& g) { return g.split.train; })
      .def_property_readonly("val", [](const LabeledGraph& g) { return g.split.val; })
      .def_property_readonly("test", [](const LabeledGraph& g) { return g.split.test; })
      .def("__repr__", [](const LabeledGraph& g) {
        return "<Graph nodes=" + std::to_string(g.num_nodes) + " edges=" + std::to_string(g.edges.size()) +
               " classes=" + std::to_string(g.num_classes) + ">";
      });

  m.def(
      "generate_sbm",
      [](std::size_t num_classes, std::size_t nodes_per_class, double p_in, double p_out,
         std::size_t feature_dim, std::uint64_t seed) {
        SbmParams p;
        p.num_classes = num_classes;
        p.nodes_per_class = nodes_per_class;
        p.p_in = p_in;
        p.p_out = p_out;
        p.feature_dim = feature_dim;
        return generate_sbm(p, seed);
      },
      py::arg("num_classes") = 3, py::arg("nodes_per_class") = 200, py::arg("p_in") = 0.3,
      py::arg("p_out") = 0.02, py::arg("feature_dim") = 16, py::arg("seed") = 0,
      "Stochastic block model graph with Gaussian class features.");
  m.def("load_graph", [](const std::filesystem::path& dir) { return load_graph(dir).graph; }, py::arg("path"));
  m.def("save_graph", &save_graph, py::arg("graph"), py::arg("path"));

  py::class_<CondenseConfig>(m, "CondenseConfig")
      .def(py::init<>())
      .def_readwrite("ratio", &CondenseConfig::ratio)
      .def_property(
          "mode", [](const CondenseConfig& c) { return to_string(c.mode); },
          [](CondenseConfig& c, const std::string& s) { c.mode = parse_mode(s); })
      .def_property(
          "explainer", [](const CondenseConfig& c) { return to_string(c.explainer); },
          [](CondenseConfig& c, const std::string& s) { c.explainer = parse_explainer(s); })
      .def_property(
          "backbone_loop", [](const CondenseConfig& c) { return to_string(c.backbone_loop); },
          [](CondenseConfig& c, const std::string& s) { c.backbone_loop = parse_backbone_loop(s); })
      .def_readwrite("blocks", &CondenseConfig::blocks)
      .def_readwrite("kappa", &CondenseConfig::kappa)
      .def_readwrite("selection_period", &CondenseConfig::selection_period)
      .def_readwrite("literal_mset", &CondenseConfig::literal_mset)
      .def_readwrite("lambda_", &CondenseConfig::lambda)
      .def_readwrite("info_rate", &CondenseConfig::info_rate)
      .def_readwrite("explainer_steps", &CondenseConfig::explainer_steps)
      .def_readwrite("lr_features", &CondenseConfig::lr_features)
      .def_readwrite("lr_adjgen", &CondenseConfig::lr_adjgen)
      .def_readwrite("theta_draws", &CondenseConfig::theta_draws)
      .def_readwrite("max_epochs", &CondenseConfig::max_epochs)
      .def_readwrite("patience", &CondenseConfig::patience)
      .def_readwrite("min_delta", &CondenseConfig::min_delta)
      .def_readwrite("hidden", &CondenseConfig::hidden)
      .def_readwrite("adjgen_hidden", &CondenseConfig::adjgen_hidden)
      .def_readwrite("threshold", &CondenseConfig::threshold)
      .def_readwrite("seed", &CondenseConfig::seed)
      .def("update", [](CondenseConfig& c, const std::string& json) { apply_config_json(c, json); },
           py::arg("json"), "Apply fields from a JSON object string.")
      .def("validate", &CondenseConfig::validate);

  py::class_<MatchReport>(m, "MatchReport")
      .def_readonly("convergence_epoch", &MatchReport::convergence_epoch)
      .def_readonly("best_epoch", &MatchReport::best_epoch)
      .def_readonly("final_loss", &MatchReport::final_loss)
      .def_readonly("stopped_by_patience", &MatchReport::stopped_by_patience)
      .def_property_readonly("trace",
                             [](const MatchReport& r) {
                               py::list rows;
                               for (const auto& t : r.trace) rows.append(py::make_tuple(t.epoch, t.loss, t.active_frac, t.seconds));
                               return rows;
                             })
      .def_property_readonly("features", [](const MatchReport& r) { return to_numpy(r.state.features); })
      .def_property_readonly("labels", [](const MatchReport& r) { return r.state.labels; })
      .def_property_readonly("active", [](const MatchReport& r) { return r.state.active; })
      .def(
          "adjacency",
          [](const MatchReport& r, double threshold) {
            return to_numpy(condensed_from_state(r.state, threshold).adjacency);
          },
          py::arg("threshold") = 0.5)
      .def(
          "save",
          [](const MatchReport& r, const std::filesystem::path& dir, double threshold) {
            save_condensed(r.state, threshold, dir);
            save_trace(r.trace, dir / "trace.csv");
          },
          py::arg("path"), py::arg("threshold") = 0.5);

  m.def(
      "condense",
      [](const LabeledGraph& g, const CondenseConfig& cfg) {
        py::gil_scoped_release release;
        return condense(g, cfg);
      },
      py::arg("graph"), py::arg("config"), "Run gradient-matching condensation.");

  m.def(
      "select_coreset",
      [](const LabeledGraph& g, const std::string& method, double ratio, std::uint64_t seed) {
        if (method == "random") return random_select(g, ratio, seed).nodes();
        if (method == "herding") return herding_select(g, ratio).nodes();
        if (method == "kcenter") return kcenter_select(g, ratio, seed).nodes();
        throw ConfigError("unknown method '" + method + "'");
      },
      py::arg("graph"), py::arg("method"), py::arg("ratio"), py::arg("seed") = 0);
  m.def(
      "save_coreset",
      [](const LabeledGraph& g, const std::vector<std::size_t>& nodes, const std::filesystem::path& dir) {
        save_condensed(condensed_from_subgraph(induced_subgraph(g, nodes)), dir);
      },
      py::arg("graph"), py::arg("nodes"), py::arg("path"));

  m.def(
      "evaluate",
      [](const std::filesystem::path& dir, const LabeledGraph& g, const std::string& arch,
         std::size_t repeats, bool features_only, std::size_t epochs, std::uint64_t seed) {
        return eval_dict(evaluate_condensed(dir, g, parse_arch(arch), repeats,
                                            features_only ? EvalMode::FeaturesOnly : EvalMode::WithStructure,
                                            hyper_with(epochs), seed));
      },
      py::arg("path"), py::arg("graph"), py::arg("arch") = "gcn", py::arg("repeats") = 3,
      py::arg("features_only") = false, py::arg("epochs") = 300, py::arg("seed") = 0,
      "Train on a condensed directory and test on the real graph.");
  m.def(
      "evaluate_full",
      [](const LabeledGraph& g, const std::string& arch, std::size_t repeats, std::size_t epochs,
         std::uint64_t seed) {
        return eval_dict(evaluate_full(g, parse_arch(arch), repeats, hyper_with(epochs), seed));
      },
      py::arg("graph"), py::arg("arch") = "gcn", py::arg("repeats") = 3, py::arg("epochs") = 300,
      py::arg("seed") = 0);

  m.def(
      "grad_match_distance",
      [](const std::vector<Array>& a, const std::vector<Array>& b) {
        return grad_match_distance(from_numpy_list(a), from_numpy_list(b));
      },
      py::arg("synthetic"), py::arg("real"), "Sum over layers and columns of (1 - cosine).");
  m.def("info_constraint", &explain::info_constraint, py::arg("p"), py::arg("r"));
  m.def(
      "normalize_adjacency", [](const Array& a) { return to_numpy(normalize_adjacency(from_numpy(a))); },
      py::arg("adjacency"));
  m.def(
      "selfcheck",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : ad::selfcheck(seed)) out.append(py::make_tuple(r.name, r.rel_error, r.passed));
        return out;
      },
      py::arg("seed") = 0, "Finite-difference checks of every differentiable primitive.");
}
