// Command-line front end: dataset generation, training, evaluation and
// single-scene prediction with optional SVG plots.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "laneattn/dataset.hpp"
#include "laneattn/errors.hpp"
#include "laneattn/metrics.hpp"
#include "laneattn/model.hpp"
#include "laneattn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace laneattn;

namespace {

const std::set<std::string> kGenKeys = {"keep_lane",   "lane_change_left", "lane_change_right",
                                        "turn_left",   "turn_right",       "fork_branch",
                                        "noise_sigma", "speed_min",        "speed_max"};
const std::set<std::string> kDataKeys = {"obs_steps", "fut_steps",   "search_radius",
                                         "max_lanes", "lane_points", "promote_all_tracks"};
const std::set<std::string> kModelKeys = {"traj_hidden",     "lane_channels", "lane_feature",
                                          "embed",           "dec_hidden",    "use_lanes",
                                          "use_interaction", "sigma_min",     "sigma_max"};
const std::set<std::string> kTrainKeys = {"batch_size", "lr_phase1", "epochs_phase1",
                                          "lr_phase2",  "epochs_phase2", "p_s",
                                          "beta1",      "beta2",     "eps",
                                          "clip_norm",  "val_ratio"};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kGenKeys.count(key) && !kDataKeys.count(key) && !kModelKeys.count(key) &&
        !kTrainKeys.count(key)) {
      throw UsageError("config file: unknown key \"" + key + "\"");
    }
    (void)value;
  }
  return j;
}

void apply_data(const json& j, data::DataConfig& c) {
  if (j.contains("obs_steps")) c.obs_steps = j["obs_steps"];
  if (j.contains("fut_steps")) c.fut_steps = j["fut_steps"];
  if (j.contains("search_radius")) c.search_radius = j["search_radius"];
  if (j.contains("max_lanes")) c.max_lanes = j["max_lanes"];
  if (j.contains("lane_points")) c.lane_points = j["lane_points"];
  if (j.contains("promote_all_tracks")) c.promote_all_tracks = j["promote_all_tracks"];
}

void apply_gen(const json& j, data::GenConfig& c) {
  for (const auto& key : kGenKeys) {
    if (!j.contains(key)) continue;
    if (key == "noise_sigma") {
      c.noise_sigma = j[key];
    } else if (key == "speed_min") {
      c.speed_min = j[key];
    } else if (key == "speed_max") {
      c.speed_max = j[key];
    } else {
      c.counts[key] = j[key];
    }
  }
  apply_data(j, c.data);
}

void apply_model(const json& j, net::ModelConfig& c) {
  if (j.contains("traj_hidden")) c.traj_hidden = j["traj_hidden"];
  if (j.contains("lane_channels")) c.lane_channels = j["lane_channels"];
  if (j.contains("lane_feature")) c.lane_feature = j["lane_feature"];
  if (j.contains("embed")) c.embed = j["embed"];
  if (j.contains("dec_hidden")) c.dec_hidden = j["dec_hidden"];
  if (j.contains("use_lanes")) c.use_lanes = j["use_lanes"];
  if (j.contains("use_interaction")) c.use_interaction = j["use_interaction"];
  if (j.contains("sigma_min")) c.sigma_min = j["sigma_min"];
  if (j.contains("sigma_max")) c.sigma_max = j["sigma_max"];
}

void apply_train(const json& j, train::TrainConfig& c) {
  if (j.contains("batch_size")) c.batch_size = j["batch_size"];
  if (j.contains("lr_phase1")) c.lr_phase1 = j["lr_phase1"];
  if (j.contains("epochs_phase1")) c.epochs_phase1 = j["epochs_phase1"];
  if (j.contains("lr_phase2")) c.lr_phase2 = j["lr_phase2"];
  if (j.contains("epochs_phase2")) c.epochs_phase2 = j["epochs_phase2"];
  if (j.contains("p_s")) c.p_s = j["p_s"];
  if (j.contains("beta1")) c.beta1 = j["beta1"];
  if (j.contains("beta2")) c.beta2 = j["beta2"];
  if (j.contains("eps")) c.eps = j["eps"];
  if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"];
  if (j.contains("val_ratio")) c.val_ratio = j["val_ratio"];
}

void echo_config(const json& resolved) { std::cout << "config: " << resolved.dump() << "\n"; }

json model_echo(const net::ModelConfig& m) {
  return json{{"traj_hidden", m.traj_hidden},   {"lane_channels", m.lane_channels},
              {"lane_feature", m.lane_feature}, {"embed", m.embed},
              {"dec_hidden", m.dec_hidden},     {"use_lanes", m.use_lanes},
              {"use_interaction", m.use_interaction}};
}

std::vector<data::Scene> load_data_dir(const fs::path& dir, const data::DataConfig& cfg) {
  const fs::path scenes = dir / "scenes";
  const fs::path map = dir / "map.json";
  if (!fs::exists(scenes) || !fs::exists(map)) {
    throw DataError("data directory must contain scenes/ and map.json: " + dir.string());
  }
  auto loaded = data::load_dataset(scenes, map, cfg);
  if (loaded.empty()) throw DataError("no usable scenes under " + scenes.string());
  return loaded;
}

// ---- generate ----------------------------------------------------------

int cmd_generate(const std::string& preset, const std::string& config_path,
                 const std::string& out, uint64_t seed) {
  data::GenConfig cfg = data::GenConfig::preset(preset);
  apply_gen(load_config(config_path), cfg);
  cfg.validate();
  json echo{{"command", "generate"}, {"preset", preset}, {"seed", seed}, {"out", out}};
  for (const auto& [k, v] : cfg.counts) echo["counts"][k] = v;
  echo["noise_sigma"] = cfg.noise_sigma;
  echo["speed_min"] = cfg.speed_min;
  echo["speed_max"] = cfg.speed_max;
  echo_config(echo);

  auto ds = data::generate_synthetic(cfg, seed);
  data::write_dataset(ds, out, cfg, seed);
  int ns = 0;
  for (const auto& s : ds.scenes) ns += s.ns_flag ? 1 : 0;
  std::cout << "wrote " << ds.scenes.size() << " scenes (" << ns << " non-straight) to " << out
            << "\n";
  return 0;
}

// ---- train -------------------------------------------------------------

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out, uint64_t seed, bool resume, const std::string& model) {
  const json j = load_config(config_path);
  data::DataConfig dcfg;
  apply_data(j, dcfg);
  net::ModelConfig mcfg;
  if (model == "tiny") {
    mcfg = net::ModelConfig::tiny();
  } else if (model == "compact") {
    mcfg = net::ModelConfig::compact();
  } else if (model != "full") {
    throw UsageError("unknown model size \"" + model + "\" (tiny, compact, full)");
  }
  apply_model(j, mcfg);
  mcfg.obs_steps = dcfg.obs_steps;
  mcfg.horizon = dcfg.fut_steps;
  mcfg.lane_points = dcfg.lane_points;
  train::TrainConfig tcfg;
  apply_train(j, tcfg);
  tcfg.seed = seed;
  tcfg.validate();

  json echo{{"command", "train"},
            {"data", data_dir},
            {"out", out},
            {"seed", seed},
            {"resume", resume},
            {"model", model_echo(mcfg)},
            {"batch_size", tcfg.batch_size},
            {"lr_phase1", tcfg.lr_phase1},
            {"epochs_phase1", tcfg.epochs_phase1},
            {"lr_phase2", tcfg.lr_phase2},
            {"epochs_phase2", tcfg.epochs_phase2},
            {"p_s", tcfg.p_s},
            {"clip_norm", tcfg.clip_norm},
            {"val_ratio", tcfg.val_ratio}};
  echo_config(echo);

  auto scenes = load_data_dir(data_dir, dcfg);
  auto [train_set, val_set] =
      data::split(std::move(scenes), 1.0 - tcfg.val_ratio, tcfg.val_ratio, seed);
  std::cout << "training on " << train_set.size() << " scenes, validating on " << val_set.size()
            << "\n";
  auto result = train::train(train_set, val_set, mcfg, tcfg, fs::path(out), resume,
                             [](const train::EpochLog& log) { std::cout << log.to_json() << "\n"; });
  std::cout << "best epoch: " << result.best_epoch << " (checkpoints in " << out << ")\n";
  return 0;
}

// ---- eval --------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& config_path, const std::string& out,
             const std::vector<int>& ks, const std::string& subset, const std::string& baseline,
             uint64_t seed) {
  if (baseline.empty() && checkpoint.empty()) {
    throw UsageError("eval needs --checkpoint unless --baseline cv is given");
  }
  if (!baseline.empty() && baseline != "cv") {
    throw UsageError("unknown baseline \"" + baseline + "\" (supported: cv)");
  }
  if (!subset.empty() && subset != "ns") {
    throw UsageError("unknown subset \"" + subset + "\" (supported: ns)");
  }
  const json j = load_config(config_path);
  data::DataConfig dcfg;
  apply_data(j, dcfg);

  json echo{{"command", "eval"},    {"checkpoint", checkpoint}, {"data", data_dir},
            {"ks", ks},             {"subset", subset},         {"baseline", baseline},
            {"seed", seed},         {"out", out}};
  echo_config(echo);

  auto scenes = load_data_dir(data_dir, dcfg);
  const geo::LaneGraph graph = data::load_map(fs::path(data_dir) / "map.json");
  if (subset == "ns") {
    std::erase_if(scenes, [](const data::Scene& s) { return !s.ns_flag; });
    if (scenes.empty()) throw DataError("no non-straight scenes in " + data_dir);
  }

  json doc;
  std::string text;
  const int horizon = dcfg.fut_steps;
  const metrics::Predictor cv = [horizon](const data::Scene& s, int) {
    return std::vector<net::GaussianTrajectory>{metrics::constant_velocity_predict(s, horizon)};
  };
  if (baseline == "cv") {
    auto report = metrics::evaluate(scenes, graph, cv, ks);
    doc["baseline_cv"] = json::parse(report.to_json());
    text = "== constant-velocity baseline ==\n" + report.to_text();
  } else {
    auto ckpt = train::load_checkpoint(checkpoint);
    auto report = metrics::evaluate_model(scenes, graph, ckpt.params, ckpt.model, ks, seed);
    auto cv_report = metrics::evaluate(scenes, graph, cv, ks);
    doc["model"] = json::parse(report.to_json());
    doc["baseline_cv"] = json::parse(cv_report.to_json());
    text = "== model ==\n" + report.to_text() + "== constant-velocity baseline ==\n" +
           cv_report.to_text();
  }
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "report.json") << doc.dump(2) << "\n";
    std::ofstream(fs::path(out) / "report.txt") << text;
    std::cout << "wrote report to " << out << "\n";
  }
  return 0;
}

// ---- predict -----------------------------------------------------------

void write_plot(const fs::path& path, const data::Scene& scene, const geo::LaneGraph& graph,
                const std::vector<net::GaussianTrajectory>& hypotheses) {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  auto grow = [&](const geo::Vec2& p) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& lane : scene.lane_ids) {
    for (const auto& p : graph.lanes.at(lane).centerline) grow(p);
  }
  for (const auto& p : scene.observed_positions()) grow(scene.frame.to_city(p));
  for (const auto& p : scene.future_positions_city()) grow(p);
  for (const auto& h : hypotheses) {
    for (const auto& s : h.steps) grow({s.mu_x, s.mu_y});
  }
  const double pad = 5.0;
  min_x -= pad, min_y -= pad, max_x += pad, max_y += pad;
  const double span = std::max(max_x - min_x, max_y - min_y);
  const double scale = 760.0 / span;
  auto px = [&](const geo::Vec2& p) { return 20.0 + (p.x - min_x) * scale; };
  auto py = [&](const geo::Vec2& p) { return 780.0 - (p.y - min_y) * scale; };

  std::ofstream svg(path);
  if (!svg) throw DataError("cannot write plot: " + path.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" "
         "viewBox=\"0 0 800 800\">\n<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  auto polyline = [&](const std::vector<geo::Vec2>& pts, const std::string& color, double width,
                      const std::string& dash = "") {
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"";
    if (!dash.empty()) svg << " stroke-dasharray=\"" << dash << "\"";
    svg << " points=\"";
    for (const auto& p : pts) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p), py(p));
      svg << buf;
    }
    svg << "\"/>\n";
  };
  for (const auto& lane : scene.lane_ids) {
    polyline(graph.lanes.at(lane).centerline, "#b0b0b0", 2.0);
  }
  std::vector<geo::Vec2> hist;
  for (const auto& p : scene.observed_positions()) hist.push_back(scene.frame.to_city(p));
  polyline(hist, "#1f77b4", 2.5);
  polyline(scene.future_positions_city(), "#2ca02c", 2.5);
  const std::vector<std::string> palette = {"#d62728", "#ff7f0e", "#9467bd",
                                            "#8c564b", "#e377c2", "#17becf"};
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<geo::Vec2> pts;
    for (const auto& s : hypotheses[i].steps) pts.push_back({s.mu_x, s.mu_y});
    const std::string& color = palette[i % palette.size()];
    polyline(pts, color, 2.0, "6,3");
    if (!pts.empty()) {
      char label[96];
      std::snprintf(label, sizeof(label),
                    "<text x=\"%.2f\" y=\"%.2f\" fill=\"%s\" font-size=\"14\">p=%.3f</text>\n",
                    px(pts.back()) + 4.0, py(pts.back()), color.c_str(),
                    hypotheses[i].probability);
      svg << label;
    }
  }
  svg << "</svg>\n";
}

int cmd_predict(const std::string& checkpoint, const std::string& scene_path,
                const std::string& map_path, const std::string& config_path, int k,
                uint64_t seed, const std::string& out, const std::string& plot) {
  const json j = load_config(config_path);
  data::DataConfig dcfg;
  apply_data(j, dcfg);
  if (k < 1) throw UsageError("--k must be >= 1");

  json echo{{"command", "predict"}, {"checkpoint", checkpoint}, {"scene", scene_path},
            {"map", map_path},      {"k", k},                   {"seed", seed}};
  echo_config(echo);

  const geo::LaneGraph graph = data::load_map(map_path);
  const auto scenes = data::load_scene_file(scene_path, graph, dcfg);
  const data::Scene& scene = scenes.front();
  auto ckpt = train::load_checkpoint(checkpoint);
  const auto hypotheses = net::predict_multimodal(scene, ckpt.params, ckpt.model, k, seed);

  json doc;
  doc["scene"] = scene.source;
  doc["k"] = k;
  doc["seed"] = seed;
  doc["hypotheses"] = json::array();
  for (const auto& h : hypotheses) {
    json steps = json::array();
    for (const auto& s : h.steps) {
      steps.push_back({{"x", s.mu_x},
                       {"y", s.mu_y},
                       {"sigma_x", s.sigma_x},
                       {"sigma_y", s.sigma_y},
                       {"rho", s.rho}});
    }
    doc["hypotheses"].push_back({{"probability", h.probability},
                                 {"lane_id", h.lane_id},
                                 {"sampled", h.sampled},
                                 {"steps", std::move(steps)}});
  }
  const std::string payload = doc.dump(2);
  if (out.empty()) {
    std::cout << payload << "\n";
  } else {
    std::ofstream(out) << payload << "\n";
    std::cout << "wrote predictions to " << out << "\n";
  }
  if (!plot.empty()) {
    write_plot(plot, scene, graph, hypotheses);
    std::cout << "wrote plot to " << plot << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-aware multimodal vehicle trajectory prediction"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  std::string config_path, out;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  std::string preset = "tiny";
  gen->add_option("--preset", preset, "Scene-count preset: tiny or small");
  gen->add_option("--config", config_path, "Flat JSON config file");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Root random seed");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string data_dir, model = "compact";
  bool resume = false;
  tr->add_option("--data", data_dir, "Dataset directory (scenes/ + map.json)")->required();
  tr->add_option("--config", config_path, "Flat JSON config file");
  tr->add_option("--out", out, "Checkpoint/log directory")->required();
  tr->add_option("--seed", seed, "Root random seed");
  tr->add_option("--model", model, "Model size: tiny, compact or full");
  tr->add_flag("--resume", resume, "Continue from last.bin in the output directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (and the CV baseline)");
  std::string checkpoint, subset, baseline;
  std::vector<int> ks = {1, 3, 6};
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--config", config_path, "Flat JSON config file");
  ev->add_option("--out", out, "Report output directory");
  ev->add_option("--k", ks, "K values for minADE/minFDE");
  ev->add_option("--subset", subset, "Restrict to a subset: ns");
  ev->add_option("--baseline", baseline, "Evaluate a baseline instead: cv");
  ev->add_option("--seed", seed, "Root random seed");

  auto* pr = app.add_subcommand("predict", "Predict one scene file");
  std::string scene_path, map_path, plot;
  int k = 6;
  pr->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pr->add_option("--scene", scene_path, "Trajectory CSV file")->required();
  pr->add_option("--map", map_path, "Map JSON file")->required();
  pr->add_option("--config", config_path, "Flat JSON config file");
  pr->add_option("--k", k, "Number of hypotheses");
  pr->add_option("--seed", seed, "Root random seed");
  pr->add_option("--out", out, "Predictions JSON file (stdout when omitted)");
  pr->add_option("--plot", plot, "SVG plot file");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(preset, config_path, out, seed);
    if (tr->parsed()) return cmd_train(data_dir, config_path, out, seed, resume, model);
    if (ev->parsed())
      return cmd_eval(checkpoint, data_dir, config_path, out, ks, subset, baseline, seed);
    if (pr->parsed())
      return cmd_predict(checkpoint, scene_path, map_path, config_path, k, seed, out, plot);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
