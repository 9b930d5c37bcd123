#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "constprobe/activations.hpp"
#include "constprobe/codec.hpp"
#include "constprobe/common.hpp"
#include "constprobe/neurons.hpp"
#include "constprobe/probe.hpp"
#include "constprobe/tasks.hpp"
#include "constprobe/treebank.hpp"
#include "constprobe/treeval.hpp"

namespace py = pybind11;
using namespace constprobe;

namespace {

using Triple = std::tuple<std::string, std::string, std::string>;

ReadOptions read_options(bool keep_punct, bool keep_null, bool keep_indices) {
  ReadOptions o;
  o.remove_punct = !keep_punct;
  o.remove_null = !keep_null;
  o.strip_numeric_indices = !keep_indices;
  return o;
}

std::vector<Triple> to_tuples(const std::vector<SeqLabelTriple>& triples) {
  std::vector<Triple> out;
  for (const auto& t : triples) out.emplace_back(t.lca_label, t.depth.str(), t.unary_label);
  return out;
}

std::vector<SeqLabelTriple> from_tuples(const std::vector<Triple>& triples) {
  std::vector<SeqLabelTriple> out;
  for (const auto& [l, d, u] : triples) out.push_back({l, DepthCode::parse(d), u});
  return out;
}

std::vector<std::tuple<std::size_t, int, int, std::string>> instances_of(const Dataset& ds) {
  std::vector<std::tuple<std::size_t, int, int, std::string>> out;
  for (const auto& i : ds.instances) out.emplace_back(i.sentence, i.i, i.j, i.label);
  return out;
}

py::array_t<float> matrix_array(const ActivationContainer& c, std::size_t s) {
  const auto& m = c.matrix(s);
  const auto cols = static_cast<py::ssize_t>(c.manifest().row_width());
  py::array_t<float> out({static_cast<py::ssize_t>(m.size()) / cols, cols});
  std::copy(m.begin(), m.end(), out.mutable_data());
  return out;
}

Eigen::MatrixXd to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
  if (x.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  Eigen::MatrixXd m(x.shape(0), x.shape(1));
  auto r = x.unchecked<2>();
  for (py::ssize_t i = 0; i < x.shape(0); ++i)
    for (py::ssize_t j = 0; j < x.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

py::dict score_dict(const ParseScore& s) {
  py::dict d;
  d["precision"] = s.precision();
  d["recall"] = s.recall();
  d["f1"] = s.f1();
  d["matched"] = s.matched;
  d["gold"] = s.gold_total;
  d["predicted"] = s.predicted_total;
  d["sentence_f1"] = s.sentence_f1;
  return d;
}

}  // namespace

PYBIND11_MODULE(_constprobe, m) {
  m.doc() = "Constituency probing over language model activations";

  static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    }
  });

  m.def("set_threads", &set_default_threads, py::arg("threads"));
  m.def("fnv1a", [](py::bytes data) { return Fnv1a().update(std::string_view(data)).hex(); }, py::arg("data"));

  // --- trees ---------------------------------------------------------------
  py::class_<ConstTree>(m, "Tree")
      .def_readonly("sentence_id", &ConstTree::sentence_id)
      .def_property_readonly("forms",
                             [](const ConstTree& t) {
                               std::vector<std::string> out;
                               for (const auto& k : t.tokens) out.push_back(k.form);
                               return out;
                             })
      .def_property_readonly("tags",
                             [](const ConstTree& t) {
                               std::vector<std::string> out;
                               for (const auto& k : t.tokens) out.push_back(k.pos);
                               return out;
                             })
      .def_property_readonly("label", [](const ConstTree& t) { return t.root.label; })
      .def("__len__", &ConstTree::size)
      .def("__str__", [](const ConstTree& t) { return to_bracketed(t); })
      .def("__repr__", [](const ConstTree& t) { return "Tree(" + to_bracketed(t) + ")"; });

  m.def("parse_treebank",
        [](const std::string& text, bool keep_punct, bool keep_null, bool keep_indices) {
          return parse_const_treebank(text, read_options(keep_punct, keep_null, keep_indices));
        },
        py::arg("text"), py::arg("keep_punct") = false, py::arg("keep_null") = false, py::arg("keep_indices") = false);
  m.def("read_treebank",
        [](const std::string& path, bool keep_punct, bool keep_null, bool keep_indices) {
          return read_const_treebank(path, read_options(keep_punct, keep_null, keep_indices));
        },
        py::arg("path"), py::arg("keep_punct") = false, py::arg("keep_null") = false, py::arg("keep_indices") = false);
  m.def("to_bracketed", &to_bracketed, py::arg("tree"));
  m.def("lca_label", &lca_label, py::arg("tree"), py::arg("i"), py::arg("j"));
  m.def("chunk_labels", &chunk_labels, py::arg("tree"), py::arg("detailed") = false);

  // --- codec ---------------------------------------------------------------
  m.def("canonicalize", [](const ConstTree& t) { return canonicalize(t); }, py::arg("tree"));
  m.def("is_canonical", &is_canonical, py::arg("tree"));
  m.def("encode", [](const ConstTree& t) { return to_tuples(encode(t)); }, py::arg("tree"),
        "Sequence labels as (lca, depth, unary) tuples.");
  m.def("decode",
        [](const std::vector<Triple>& triples, const std::vector<std::string>& forms,
           std::optional<std::vector<std::string>> tags) {
          if (tags && tags->size() != forms.size()) throw std::invalid_argument("decode: one tag per form");
          std::vector<Token> tokens;
          for (std::size_t k = 0; k < forms.size(); ++k)
            tokens.push_back({static_cast<int>(k), forms[k], tags ? (*tags)[k] : std::string("X")});
          return decode(from_tuples(triples), tokens);
        },
        py::arg("triples"), py::arg("forms"), py::arg("tags") = py::none());

  // --- tasks ---------------------------------------------------------------
  m.def("smoothed_frequencies", &smoothed_frequencies, py::arg("supply"));
  m.def("allocate_sample", &allocate_sample, py::arg("supply"), py::arg("n"));
  m.def("sample_lca",
        [](const std::vector<ConstTree>& corpus, std::size_t count, std::uint64_t seed, bool include_diagonal) {
          const auto s = sample_lca(corpus, {count, seed, include_diagonal});
          py::dict d;
          d["instances"] = instances_of(s.dataset);
          d["labels"] = s.labels;
          d["supply"] = s.supply;
          d["counts"] = s.counts;
          d["target_frequencies"] = s.target_frequencies;
          d["achieved_frequencies"] = s.achieved_frequencies;
          return d;
        },
        py::arg("corpus"), py::arg("count"), py::arg("seed") = 1, py::arg("include_diagonal") = true);
  m.def("chunk_dataset",
        [](const std::vector<ConstTree>& corpus, bool detailed) {
          ChunkOptions o;
          o.detailed = detailed;
          return instances_of(build_chunk_dataset(corpus, o));
        },
        py::arg("corpus"), py::arg("detailed") = false);

  // --- activations ---------------------------------------------------------
  py::class_<ActivationContainer>(m, "Container")
      .def_static("load", &ActivationContainer::load, py::arg("dir"))
      .def("save", &ActivationContainer::save, py::arg("dir"))
      .def("__len__", &ActivationContainer::sentence_count)
      .def_property_readonly("layer_count", &ActivationContainer::layer_count)
      .def_property_readonly("width", &ActivationContainer::width)
      .def_property_readonly("model_id", [](const ActivationContainer& c) { return c.manifest().model_id; })
      .def("matrix", &matrix_array, py::arg("sentence"),
           "Token-by-feature float32 array; columns are layer-major.");
  m.def("check_alignment", &check_alignment, py::arg("container"), py::arg("corpus"));
  m.def("synth_container",
        [](const std::vector<ConstTree>& corpus, const std::string& mode, int width, int layers, std::uint64_t seed,
           double signal_strength, std::vector<int> signal_layers, std::vector<std::vector<std::string>> planted) {
          SynthOptions o;
          o.mode = parse_synth_mode(mode);
          o.width = width;
          o.layer_count = layers;
          o.seed = seed;
          o.signal_strength = signal_strength;
          o.signal_layers = std::move(signal_layers);
          o.planted_labels = std::move(planted);
          return synth_container(corpus, o).container;
        },
        py::arg("corpus"), py::arg("mode") = "gaussian", py::arg("width") = 16, py::arg("layers") = 4,
        py::arg("seed") = 1, py::arg("signal_strength") = 10.0, py::arg("signal_layers") = std::vector<int>{},
        py::arg("planted") = std::vector<std::vector<std::string>>{});
  m.def("combine",
        [](const std::vector<float>& a, const std::vector<float>& b, const std::string& method) {
          return combine(a, b, parse_combination(method));
        },
        py::arg("a"), py::arg("b"), py::arg("method") = "concat");
  m.def("reconstruction_layers", &reconstruction_layers, py::arg("layer_count"));

  // --- probe ---------------------------------------------------------------
  py::class_<ProbeModel>(m, "Probe")
      .def_readonly("classes", &ProbeModel::classes)
      .def_readonly("loss_history", &ProbeModel::loss_history)
      .def_property_readonly("weights", [](const ProbeModel& p) { return Eigen::MatrixXf(p.weights); })
      .def_property_readonly("bias", [](const ProbeModel& p) { return Eigen::VectorXf(p.bias); })
      .def("predict",
           [](const ProbeModel& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
             const auto mat = to_matrix(x);
             if (static_cast<std::size_t>(mat.cols()) != p.feature_count())
               throw std::invalid_argument("predict: feature count differs from the model");
             std::vector<std::string> out;
             std::vector<double> row(static_cast<std::size_t>(mat.cols()));
             for (Eigen::Index r = 0; r < mat.rows(); ++r) {
               for (Eigen::Index c = 0; c < mat.cols(); ++c) row[static_cast<std::size_t>(c)] = mat(r, c);
               out.push_back(p.classes[p.predict(row)]);
             }
             return out;
           },
           py::arg("features"))
      .def("save", &ProbeModel::save, py::arg("path"))
      .def_static("load", &ProbeModel::load, py::arg("path"));
  m.def("train_matrix",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::vector<std::string>& labels, int epochs, double lr, double l1, double l2,
           std::size_t batch_size, std::uint64_t seed) {
          TrainConfig c;
          c.epochs = epochs;
          c.learning_rate = lr;
          c.l1 = l1;
          c.l2 = l2;
          c.batch_size = batch_size;
          c.seed = seed;
          c.validate();
          const auto mat = to_matrix(x);
          py::gil_scoped_release release;
          return train_matrix(mat, labels, c);
        },
        py::arg("features"), py::arg("labels"), py::arg("epochs") = 10, py::arg("lr") = 1e-3, py::arg("l1") = 1e-3,
        py::arg("l2") = 1e-3, py::arg("batch_size") = 512, py::arg("seed") = 1);

  // --- neurons -------------------------------------------------------------
  py::class_<NeuronRanking>(m, "Ranking")
      .def_readonly("order", &NeuronRanking::order)
      .def_readonly("scores", &NeuronRanking::scores)
      .def_readonly("classes", &NeuronRanking::classes)
      .def("__len__", &NeuronRanking::size)
      .def("to_json", &NeuronRanking::to_json)
      .def_static("from_json", &NeuronRanking::from_json, py::arg("text"));
  m.def("rank_neurons", &rank_neurons, py::arg("probe"));
  m.def("select_subset",
        [](const NeuronRanking& r, const std::string& mode, double fraction, std::uint64_t seed) {
          return select_subset(r, parse_subset_mode(mode), fraction, seed);
        },
        py::arg("ranking"), py::arg("mode") = "top", py::arg("fraction") = 0.1, py::arg("seed") = 1);
  m.def("ranking_overlap", &ranking_overlap, py::arg("a"), py::arg("b"), py::arg("fraction"));

  // --- scoring -------------------------------------------------------------
  m.def("score", [](const std::vector<ConstTree>& gold, const std::vector<ConstTree>& pred) {
    return score_dict(score(gold, pred));
  }, py::arg("gold"), py::arg("predicted"));
  m.def("pearson", &pearson, py::arg("a"), py::arg("b"));
}
