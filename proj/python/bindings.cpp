// Python bindings for the core pipeline: dataset generation and loading,
// training, prediction, and evaluation.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "laneattn/dataset.hpp"
#include "laneattn/errors.hpp"
#include "laneattn/metrics.hpp"
#include "laneattn/model.hpp"
#include "laneattn/training.hpp"

namespace py = pybind11;
using namespace laneattn;

namespace {

net::ModelConfig model_config(const std::string& size, const data::DataConfig& dcfg) {
  net::ModelConfig cfg;
  if (size == "tiny") {
    cfg = net::ModelConfig::tiny();
  } else if (size == "compact") {
    cfg = net::ModelConfig::compact();
  } else if (size != "full") {
    throw UsageError("unknown model size: " + size + " (expected tiny, compact or full)");
  }
  cfg.obs_steps = dcfg.obs_steps;
  cfg.horizon = dcfg.fut_steps;
  cfg.lane_points = dcfg.lane_points;
  return cfg;
}

py::list to_py(const std::vector<net::GaussianTrajectory>& preds) {
  py::list out;
  for (const auto& t : preds) {
    py::dict d;
    d["probability"] = t.probability;
    d["lane_id"] = t.lane_id;
    d["sampled"] = t.sampled;
    py::list steps;
    for (const auto& s : t.steps) {
      py::dict step;
      step["x"] = s.mu_x;
      step["y"] = s.mu_y;
      step["sigma_x"] = s.sigma_x;
      step["sigma_y"] = s.sigma_y;
      step["rho"] = s.rho;
      steps.append(step);
    }
    d["steps"] = steps;
    out.append(d);
  }
  return out;
}

/// Scenes plus the lane graph they were built against.
struct Dataset {
  geo::LaneGraph graph;
  std::vector<data::Scene> scenes;
  data::DataConfig data_cfg;
};

/// A trained (or loaded) model: parameters plus their architecture config.
struct Model {
  net::ModelConfig cfg;
  net::ParamStore params;
  std::vector<train::EpochLog> history;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lane-attention trajectory prediction core";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<GeometryError>(m, "GeometryError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<data::Scene>(m, "Scene")
      .def_readonly("behavior", &data::Scene::behavior)
      .def_readonly("gt_lane", &data::Scene::gt_lane)
      .def_readonly("ns_flag", &data::Scene::ns_flag)
      .def_readonly("lane_ids", &data::Scene::lane_ids)
      .def_readonly("source", &data::Scene::source)
      .def_property_readonly("observed_len",
                             [](const data::Scene& s) { return s.target.observed_len; })
      .def_property_readonly("future_city",
                             [](const data::Scene& s) {
                               py::list out;
                               for (const auto& p : s.future_positions_city())
                                 out.append(py::make_tuple(p.x, p.y));
                               return out;
                             })
      .def("__repr__", [](const data::Scene& s) {
        return "<Scene behavior=" + s.behavior + " lanes=" + std::to_string(s.lane_ids.size()) +
               (s.ns_flag ? " ns" : "") + ">";
      });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("scenes", &Dataset::scenes)
      .def("__len__", [](const Dataset& d) { return d.scenes.size(); })
      .def("split",
           [](const Dataset& d, double train_ratio, double val_ratio, uint64_t seed) {
             auto [a, b] = data::split(d.scenes, train_ratio, val_ratio, seed);
             Dataset da{d.graph, std::move(a), d.data_cfg};
             Dataset db{d.graph, std::move(b), d.data_cfg};
             return py::make_tuple(std::move(da), std::move(db));
           },
           py::arg("train_ratio") = 0.8, py::arg("val_ratio") = 0.2, py::arg("seed") = 0)
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset scenes=" + std::to_string(d.scenes.size()) + ">";
      });

  m.def(
      "generate",
      [](const std::string& preset, uint64_t seed,
         const std::optional<std::map<std::string, int>>& counts) {
        data::GenConfig cfg = data::GenConfig::preset(preset);
        if (counts) cfg.counts = *counts;
        auto ds = data::generate_synthetic(cfg, seed);
        return Dataset{std::move(ds.graph), std::move(ds.scenes), cfg.data};
      },
      py::arg("preset") = "tiny", py::arg("seed") = 0, py::arg("counts") = py::none(),
      "Generate a synthetic dataset (preset 'tiny' or 'small'; counts overrides the mix)");

  m.def(
      "write_dataset",
      [](const std::string& preset, uint64_t seed, const std::filesystem::path& out_dir) {
        const data::GenConfig cfg = data::GenConfig::preset(preset);
        data::write_dataset(data::generate_synthetic(cfg, seed), out_dir, cfg, seed);
      },
      py::arg("preset"), py::arg("seed"), py::arg("out_dir"),
      "Generate and write a dataset (scenes/*.csv, map.json, manifest.json)");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& dir) {
        data::DataConfig dcfg;
        Dataset out;
        out.graph = data::load_map(dir / "map.json");
        out.scenes = data::load_dataset(dir / "scenes", dir / "map.json", dcfg);
        out.data_cfg = dcfg;
        return out;
      },
      py::arg("dir"), "Load a dataset directory written by write_dataset or the CLI");

  py::class_<Model>(m, "Model")
      .def_property_readonly("num_params",
                             [](const Model& mdl) {
                               int64_t n = 0;
                               for (const auto& [name, t] : mdl.params) n += t.numel();
                               return n;
                             })
      .def_property_readonly("history",
                             [](const Model& mdl) {
                               py::list out;
                               for (const auto& e : mdl.history) {
                                 py::dict d;
                                 d["epoch"] = e.epoch;
                                 d["lr"] = e.lr;
                                 d["train_total"] = e.train_total;
                                 d["val_total"] = e.val_total;
                                 d["val_ade1"] = e.val_ade1;
                                 out.append(d);
                               }
                               return out;
                             })
      .def(
          "predict",
          [](const Model& mdl, const data::Scene& scene, int k, uint64_t seed) {
            return to_py(net::predict_multimodal(scene, mdl.params, mdl.cfg, k, seed));
          },
          py::arg("scene"), py::arg("k") = 6, py::arg("seed") = 0,
          "Ranked city-frame hypotheses for one scene")
      .def(
          "save",
          [](const Model& mdl, const std::filesystem::path& path) {
            train::Checkpoint ckpt;
            ckpt.model = mdl.cfg;
            ckpt.params = mdl.params;
            train::save_checkpoint(ckpt, path);
          },
          py::arg("path"));

  m.def(
      "train",
      [](const Dataset& train_set, const std::optional<Dataset>& val_set,
         const std::string& model, int batch_size, int epochs_phase1, int epochs_phase2,
         uint64_t seed) {
        train::TrainConfig tcfg;
        tcfg.batch_size = batch_size;
        tcfg.epochs_phase1 = epochs_phase1;
        tcfg.epochs_phase2 = epochs_phase2;
        tcfg.seed = seed;
        const net::ModelConfig cfg = model_config(model, train_set.data_cfg);
        auto result = train::train(train_set.scenes,
                                   val_set ? val_set->scenes : std::vector<data::Scene>{}, cfg,
                                   tcfg);
        return Model{cfg, std::move(result.best_params), std::move(result.history)};
      },
      py::arg("train_set"), py::arg("val_set") = py::none(), py::arg("model") = "tiny",
      py::arg("batch_size") = 32, py::arg("epochs_phase1") = 60, py::arg("epochs_phase2") = 5,
      py::arg("seed") = 0, "Two-phase training; returns the best model by validation ADE");

  m.def(
      "load_model",
      [](const std::filesystem::path& path) {
        auto ckpt = train::load_checkpoint(path);
        return Model{ckpt.model, std::move(ckpt.params), {}};
      },
      py::arg("path"), "Load a checkpoint written by save() or the CLI");

  m.def(
      "evaluate",
      [](const Model& mdl, const Dataset& ds, const std::vector<int>& ks, uint64_t seed) {
        const auto report =
            metrics::evaluate_model(ds.scenes, ds.graph, mdl.params, mdl.cfg, ks, seed);
        py::module_ json = py::module_::import("json");
        return json.attr("loads")(report.to_json());
      },
      py::arg("model"), py::arg("dataset"), py::arg("ks") = std::vector<int>{1, 3, 6},
      py::arg("seed") = 0, "minADE/minFDE/DAC/MR per K, for the full set and the NS subset");

  m.def(
      "evaluate_cv_baseline",
      [](const Dataset& ds, const std::vector<int>& ks) {
        const metrics::Predictor cv = [](const data::Scene& s, int) {
          return std::vector<net::GaussianTrajectory>{metrics::constant_velocity_predict(
              s, static_cast<int>(s.target.positions.size()) - s.target.observed_len)};
        };
        const auto report = metrics::evaluate(ds.scenes, ds.graph, cv, ks);
        py::module_ json = py::module_::import("json");
        return json.attr("loads")(report.to_json());
      },
      py::arg("dataset"), py::arg("ks") = std::vector<int>{1},
      "Constant-velocity baseline metrics");

  m.def(
      "ade",
      [](const std::vector<std::pair<double, double>>& pred,
         const std::vector<std::pair<double, double>>& gt) {
        std::vector<net::GaussianStep> steps;
        std::vector<geo::Vec2> pts;
        for (const auto& [x, y] : pred) steps.push_back({x, y, 1.0, 1.0, 0.0});
        for (const auto& [x, y] : gt) pts.push_back({x, y});
        return metrics::ade(steps, pts);
      },
      py::arg("pred"), py::arg("gt"), "Average displacement error between point lists");
}
