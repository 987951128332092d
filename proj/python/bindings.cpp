#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "feddti/bench.hpp"
#include "feddti/dataset.hpp"
#include "feddti/ensemble.hpp"
#include "feddti/error.hpp"
#include "feddti/federation.hpp"
#include "feddti/learner.hpp"
#include "feddti/partitioner.hpp"

namespace py = pybind11;
using namespace feddti;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

ExperimentConfig config_arg(const py::object& cfg) {
  if (py::isinstance<py::str>(cfg)) return load_config(cfg.cast<std::string>());
  return config_from_json(from_py(cfg));
}

py::dict grid_dict(const GridReport& r) {
  py::dict d;
  d["setup"] = r.setup;
  d["row_keys"] = r.row_keys;
  d["col_keys"] = r.col_keys;
  d["reference_row"] = r.reference_row;
  d["reference_col"] = r.reference_col;
  py::list cells;
  for (const auto& c : r.cells) {
    py::dict cell;
    cell["row_key"] = c.row_key;
    cell["col_key"] = c.col_key;
    cell["repeats"] = c.repeats;
    cell["mean_mse"] = c.mean_mse;
    cell["std_mse"] = c.std_mse;
    cell["pct_change"] = c.pct_change;
    cells.append(cell);
  }
  d["cells"] = cells;
  py::list runs;
  for (const auto& x : r.runs) {
    py::dict run;
    run["row_key"] = x.row_key;
    run["col_key"] = x.col_key;
    run["repeat"] = x.repeat;
    run["final_mse"] = x.final_mse;
    runs.append(run);
  }
  d["runs"] = runs;
  d["provenance"] = to_py(r.provenance);
  return d;
}

py::dict comparison_dict(const ComparisonReport& r) {
  py::list rows;
  for (const auto& x : r.rows) {
    py::dict row;
    row["distribution"] = x.distribution;
    row["client_count"] = x.client_count;
    row["ensemble_mse"] = x.ensemble_mse;
    row["federated_mse"] = x.federated_mse;
    row["pct_difference"] = x.pct_difference;
    rows.append(row);
  }
  py::dict d;
  d["rows"] = rows;
  d["provenance"] = to_py(r.provenance);
  return d;
}

ModelConfig model_config(const std::string& kind, std::size_t embedding_dim, std::size_t hidden_dim,
                         const Dataset& ds) {
  ModelConfig m{parse_model_kind(kind), embedding_dim, hidden_dim, ds.drugs().size(), ds.proteins().size()};
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated drug-target interaction benchmark";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::enum_<EntityDim>(m, "EntityDim").value("protein", EntityDim::protein).value("drug", EntityDim::drug);
  py::enum_<ModelKind>(m, "ModelKind")
      .value("linear", ModelKind::linear)
      .value("two_tower_mlp", ModelKind::two_tower_mlp);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def(py::init([](std::size_t n_drugs, std::size_t n_proteins, std::size_t n_records, std::size_t latent_dim,
                       double noise_sd, std::uint64_t seed) {
             return SyntheticSpec{n_drugs, n_proteins, n_records, latent_dim, noise_sd, seed};
           }),
           py::arg("n_drugs") = 200, py::arg("n_proteins") = 50, py::arg("n_records") = 20000,
           py::arg("latent_dim") = 8, py::arg("noise_sd") = 0.1, py::arg("seed") = 0)
      .def_readwrite("n_drugs", &SyntheticSpec::n_drugs)
      .def_readwrite("n_proteins", &SyntheticSpec::n_proteins)
      .def_readwrite("n_records", &SyntheticSpec::n_records)
      .def_readwrite("latent_dim", &SyntheticSpec::latent_dim)
      .def_readwrite("noise_sd", &SyntheticSpec::noise_sd)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("n_drugs", [](const Dataset& d) { return d.drugs().size(); })
      .def_property_readonly("n_proteins", [](const Dataset& d) { return d.proteins().size(); })
      .def_property_readonly("source", [](const Dataset& d) { return d.metadata().source; })
      .def("records",
           [](const Dataset& d) {
             std::vector<std::tuple<std::string, std::string, double>> out;
             out.reserve(d.size());
             for (const auto& r : d.records()) out.emplace_back(r.drug_id, r.protein_id, r.label);
             return out;
           })
      .def("samples",
           [](const Dataset& d) {
             std::vector<std::tuple<std::int32_t, std::int32_t, double>> out;
             out.reserve(d.size());
             for (const auto& s : d.samples()) out.emplace_back(s.drug, s.protein, s.label);
             return out;
           })
      .def("subset", [](const Dataset& d, const std::vector<std::size_t>& idx) { return d.subset(idx); })
      .def("save_csv", [](const Dataset& d, const std::filesystem::path& p) { save_csv(d, p); });

  m.def("load_csv", [](const std::filesystem::path& p) { return load_csv(p); }, py::arg("path"));
  m.def("generate_synthetic", &generate_synthetic, py::arg("spec"));

  py::class_<SplitPair>(m, "SplitPair")
      .def_readonly("train", &SplitPair::train)
      .def_readonly("test", &SplitPair::test)
      .def_readonly("train_indices", &SplitPair::train_indices)
      .def_readonly("test_indices", &SplitPair::test_indices)
      .def_readonly("test_fraction", &SplitPair::test_fraction);
  m.def("split_train_test", &split_train_test, py::arg("dataset"), py::arg("test_fraction"), py::arg("seed"));

  py::class_<Partition>(m, "Partition")
      .def_readonly("assignments", &Partition::assignments)
      .def_readonly("withheld", &Partition::withheld)
      .def_readonly("source_size", &Partition::source_size)
      .def_property_readonly("strategy", [](const Partition& p) { return p.provenance.strategy; })
      .def_property_readonly("params", [](const Partition& p) { return to_py(p.provenance.params); })
      .def_property_readonly("n_clients", &Partition::n_clients)
      .def("client_sizes", &Partition::client_sizes)
      .def("hash", [](const Partition& p) { return partition_hash(p); })
      .def("write_manifest", [](const Partition& p, const std::filesystem::path& csv,
                                const std::filesystem::path& json) { write_partition_manifest(p, csv, json); });

  m.def("read_partition_manifest",
        [](const std::filesystem::path& csv, const std::filesystem::path& json) {
          return read_partition_manifest(csv, json);
        });
  m.def("partition_iid", &partition_iid, py::arg("dataset"), py::arg("n_clients"), py::arg("seed"));
  m.def("partition_entity", &partition_entity, py::arg("dataset"), py::arg("n_clients"), py::arg("dim"),
        py::arg("seed"));
  m.def(
      "apply_gaussian_mixing",
      [](const Partition& p, double level, double sigma) { return apply_gaussian_mixing(p, {level, sigma}); },
      py::arg("partition"), py::arg("level"), py::arg("sigma"));
  m.def(
      "partition_combined",
      [](const Dataset& ds, std::size_t k, double level, double sigma, std::uint64_t seed) {
        return partition_combined(ds, k, {level, sigma}, seed);
      },
      py::arg("dataset"), py::arg("n_clients"), py::arg("level"), py::arg("sigma"), py::arg("seed"));
  m.def("partition_quantity_skew", &partition_quantity_skew, py::arg("dataset"), py::arg("n_clients"),
        py::arg("dominant_share"), py::arg("sigma_q"), py::arg("seed"));
  m.def(
      "partition_addition",
      [](const Dataset& ds, double dominant, double extra, std::size_t n_extra, std::uint64_t seed) {
        return partition_addition(ds, {dominant, extra, n_extra}, seed);
      },
      py::arg("dataset"), py::arg("dominant_share"), py::arg("extra_share"), py::arg("n_extra_clients"),
      py::arg("seed"));
  m.def("largest_remainder", [](std::size_t total, const std::vector<double>& w) { return largest_remainder(total, w); });
  m.def("mixing_level_grid", &mixing_level_grid);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](const std::string& kind, std::size_t e, std::size_t h, std::size_t nd, std::size_t np) {
             ModelConfig c{parse_model_kind(kind), e, h, nd, np};
             c.validate();
             return c;
           }),
           py::arg("kind") = "two_tower_mlp", py::arg("embedding_dim") = 16, py::arg("hidden_dim") = 32,
           py::arg("n_drugs") = 0, py::arg("n_proteins") = 0)
      .def_static(
          "for_dataset",
          [](const Dataset& ds, const std::string& kind, std::size_t e, std::size_t h) {
            return model_config(kind, e, h, ds);
          },
          py::arg("dataset"), py::arg("kind") = "two_tower_mlp", py::arg("embedding_dim") = 16,
          py::arg("hidden_dim") = 32)
      .def_readwrite("kind", &ModelConfig::kind)
      .def_readwrite("embedding_dim", &ModelConfig::embedding_dim)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("n_drugs", &ModelConfig::n_drugs)
      .def_readwrite("n_proteins", &ModelConfig::n_proteins);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](std::size_t epochs, double lr, std::size_t batch, std::uint64_t seed) {
             TrainConfig t{epochs, lr, batch, seed, 0};
             t.validate();
             return t;
           }),
           py::arg("epochs") = 1, py::arg("learning_rate") = 0.1, py::arg("batch_size") = 8, py::arg("seed") = 0)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("first_epoch", &TrainConfig::first_epoch);

  py::class_<ParameterVector>(m, "ParameterVector")
      .def("__len__", &ParameterVector::size)
      .def("__eq__", [](const ParameterVector& a, const ParameterVector& b) { return a == b; })
      .def("values", [](const ParameterVector& p) { return std::vector<double>(p.values().begin(), p.values().end()); })
      .def("names",
           [](const ParameterVector& p) {
             std::vector<std::string> out;
             for (const auto& t : p.layout()) out.push_back(t.name);
             return out;
           })
      .def("tensor",
           [](const ParameterVector& p, const std::string& name) {
             const auto t = p.tensor(name);
             return std::vector<double>(t.begin(), t.end());
           })
      .def("save", [](const ParameterVector& p, const std::filesystem::path& path) { save_parameters(p, path); });

  m.def("load_parameters", [](const std::filesystem::path& p) { return load_parameters(p); });
  m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));
  m.def("predict", &predict, py::arg("params"), py::arg("config"), py::arg("drug"), py::arg("protein"));
  m.def(
      "evaluate_mse",
      [](const ParameterVector& p, const ModelConfig& c, const Dataset& d) { return evaluate_mse(p, c, d); },
      py::arg("params"), py::arg("config"), py::arg("dataset"));
  m.def(
      "sgd_train",
      [](const ParameterVector& p, const ModelConfig& c, const TrainConfig& t, const Dataset& d) {
        return sgd_train(p, c, t, d);
      },
      py::arg("params"), py::arg("config"), py::arg("train"), py::arg("dataset"));

  m.def(
      "run_federation",
      [](const SplitPair& split, const Partition& part, const ModelConfig& mcfg, const TrainConfig& tcfg,
         std::size_t rounds, std::uint64_t seed, std::size_t workers) {
        FedResult r;
        {
          py::gil_scoped_release release;
          r = run_federation(split, part, mcfg, tcfg, rounds, seed, workers);
        }
        py::dict d;
        d["params"] = r.final_params;
        std::vector<std::pair<std::size_t, double>> hist;
        for (const auto& h : r.history) hist.emplace_back(h.round, h.global_mse);
        d["history"] = hist;
        d["config"] = to_py(r.config_echo);
        return d;
      },
      py::arg("split"), py::arg("partition"), py::arg("model"), py::arg("train"), py::arg("rounds"),
      py::arg("seed"), py::arg("workers") = 1);

  py::class_<EnsembleModel>(m, "EnsembleModel")
      .def_readonly("members", &EnsembleModel::members)
      .def_readonly("member_clients", &EnsembleModel::member_clients)
      .def_readonly("model", &EnsembleModel::mcfg)
      .def("predict", &predict_ensemble, py::arg("drug"), py::arg("protein"))
      .def("evaluate", [](const EnsembleModel& e, const Dataset& d) { return evaluate_ensemble(e, d); })
      .def("save", [](const EnsembleModel& e, const std::filesystem::path& dir) { save_ensemble(e, dir); });
  m.def("load_ensemble", [](const std::filesystem::path& dir) { return load_ensemble(dir); });
  m.def(
      "train_bagging",
      [](const SplitPair& split, const Partition& part, const ModelConfig& mcfg, const TrainConfig& tcfg,
         std::size_t total_epochs, std::uint64_t seed, std::size_t workers) {
        py::gil_scoped_release release;
        return train_bagging(split, part, mcfg, tcfg, total_epochs, seed, workers);
      },
      py::arg("split"), py::arg("partition"), py::arg("model"), py::arg("train"), py::arg("total_epochs"),
      py::arg("seed"), py::arg("workers") = 1);

  m.def("pct_difference", &pct_difference, py::arg("federated_mse"), py::arg("ensemble_mse"));
  m.def(
      "load_config", [](const py::object& cfg) { return to_py(config_to_json(config_arg(cfg))); },
      py::arg("config"), "Validates a config (path or dict) and returns it with defaults filled in.");
  m.def(
      "run_grid",
      [](const py::object& cfg, std::size_t workers) {
        const auto c = config_arg(cfg);
        GridReport r;
        {
          py::gil_scoped_release release;
          r = run_grid(c, workers);
        }
        return grid_dict(r);
      },
      py::arg("config"), py::arg("workers") = 1);
  m.def(
      "run_comparison",
      [](const py::object& cfg, std::size_t workers) {
        const auto c = config_arg(cfg);
        ComparisonReport r;
        {
          py::gil_scoped_release release;
          r = run_comparison(c, workers);
        }
        return comparison_dict(r);
      },
      py::arg("config"), py::arg("workers") = 1);
  m.def(
      "write_grid_reports",
      [](const py::object& cfg, const std::filesystem::path& out, std::size_t workers) {
        const auto c = config_arg(cfg);
        py::gil_scoped_release release;
        return write_reports(run_grid(c, workers), out);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);
  m.def("read_grid_report", [](const std::filesystem::path& dir) { return grid_dict(read_grid_report(dir)); });
}
