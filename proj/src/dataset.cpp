#include "laneattn/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "laneattn/rng.hpp"

namespace laneattn::data {

using geo::Vec2;
using nlohmann::json;

int GenConfig::total() const {
  int n = 0;
  for (const auto& [k, v] : counts) n += v;
  return n;
}

void GenConfig::validate() const {
  static const std::vector<std::string> known = {"keep_lane",  "lane_change_left",
                                                 "lane_change_right", "turn_left",
                                                 "turn_right", "fork_branch"};
  for (const auto& [k, v] : counts) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown behavior class: " + k);
    }
    if (v < 0) throw ConfigError("negative count for behavior " + k);
  }
  if (total() <= 0) throw ConfigError("generator config produces zero scenes");
  if (speed_min <= 0 || speed_max < speed_min) throw ConfigError("invalid speed range");
  if (noise_sigma < 0) throw ConfigError("negative noise sigma");
}

GenConfig GenConfig::preset(const std::string& name) {
  GenConfig cfg;
  if (name == "tiny") {
    cfg.counts = {{"keep_lane", 40},  {"lane_change_left", 4}, {"lane_change_right", 4},
                  {"turn_left", 5},   {"turn_right", 5},       {"fork_branch", 6}};
  } else if (name == "small") {
    cfg.counts = {{"keep_lane", 1440}, {"lane_change_left", 110}, {"lane_change_right", 110},
                  {"turn_left", 120},  {"turn_right", 120},       {"fork_branch", 100}};
  } else {
    throw ConfigError("unknown generator preset: " + name);
  }
  return cfg;
}

geo::LaneGraph load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open map file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed map JSON " + path.string() + ": " + e.what());
  }
  geo::LaneGraph graph;
  for (const auto& jl : j.at("lanes")) {
    geo::Lane lane;
    lane.id = jl.at("id").get<std::string>();
    for (const auto& p : jl.at("centerline")) {
      lane.centerline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    if (lane.centerline.size() < 2) throw DataError("lane " + lane.id + " has < 2 points");
    lane.successors = jl.value("successors", std::vector<std::string>{});
    lane.predecessors = jl.value("predecessors", std::vector<std::string>{});
    lane.is_intersection = jl.value("is_intersection", false);
    graph.lanes.emplace(lane.id, std::move(lane));
  }
  for (const auto& [id, lane] : graph.lanes) {
    for (const auto& s : lane.successors) {
      if (!graph.lanes.count(s)) throw DataError("lane " + id + " has unknown successor " + s);
    }
    for (const auto& p : lane.predecessors) {
      if (!graph.lanes.count(p)) throw DataError("lane " + id + " has unknown predecessor " + p);
    }
  }
  if (j.contains("drivable_area")) {
    for (const auto& jp : j.at("drivable_area")) {
      geo::Polygon poly;
      for (const auto& p : jp) poly.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      graph.drivable_area.push_back(std::move(poly));
    }
  }
  return graph;
}

void save_map(const geo::LaneGraph& graph, const std::filesystem::path& path) {
  json j;
  j["lanes"] = json::array();
  for (const auto& [id, lane] : graph.lanes) {
    json jl;
    jl["id"] = id;
    jl["centerline"] = json::array();
    for (const auto& p : lane.centerline) jl["centerline"].push_back({p.x, p.y});
    jl["successors"] = lane.successors;
    jl["predecessors"] = lane.predecessors;
    jl["is_intersection"] = lane.is_intersection;
    j["lanes"].push_back(std::move(jl));
  }
  j["drivable_area"] = json::array();
  for (const auto& poly : graph.drivable_area) {
    json jp = json::array();
    for (const auto& p : poly) jp.push_back({p.x, p.y});
    j["drivable_area"].push_back(std::move(jp));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write map file: " + path.string());
  out << j.dump(1) << "\n";
}

namespace {

std::vector<Vec2> central_difference_velocities(const std::vector<Vec2>& pos,
                                                const std::vector<double>& t) {
  const size_t n = pos.size();
  std::vector<Vec2> vel(n);
  if (n == 1) return vel;
  for (size_t i = 0; i < n; ++i) {
    const size_t a = i == 0 ? 0 : i - 1;
    const size_t b = i + 1 == n ? n - 1 : i + 1;
    const double dt = t[b] - t[a];
    vel[i] = (pos[b] - pos[a]) * (dt > 0 ? 1.0 / dt : 0.0);
  }
  return vel;
}

}  // namespace

Scene build_scene(const RawScene& raw, const geo::LaneGraph& graph, const DataConfig& cfg) {
  const int total = cfg.total_steps();
  if (static_cast<int>(raw.target.size()) < total) {
    throw DataError("scene " + raw.source + ": target track has " +
                    std::to_string(raw.target.size()) + " steps, needs " + std::to_string(total));
  }
  Scene scene;
  scene.behavior = raw.behavior;
  scene.source = raw.source;
  scene.intended_lane_id = raw.intended_lane_id;

  TrajectorySequence tgt;
  tgt.role = Role::kTarget;
  tgt.observed_len = cfg.obs_steps;
  tgt.timestamps.assign(raw.target.timestamps.begin(), raw.target.timestamps.begin() + total);
  tgt.positions.assign(raw.target.positions.begin(), raw.target.positions.begin() + total);
  tgt.velocities = raw.target.velocities.size() == raw.target.positions.size() &&
                           !raw.target.velocities.empty()
                       ? std::vector<Vec2>(raw.target.velocities.begin(),
                                           raw.target.velocities.begin() + total)
                       : central_difference_velocities(tgt.positions, tgt.timestamps);

  const Vec2 last_obs = tgt.positions[static_cast<size_t>(cfg.obs_steps) - 1];
  const std::vector<Vec2> observed(tgt.positions.begin(),
                                   tgt.positions.begin() + cfg.obs_steps);
  const geo::Pose2 anchor{last_obs, geo::anchor_heading(observed)};
  scene.frame = geo::Frame(anchor);

  auto candidates = geo::find_candidate_lanes(graph, last_obs, cfg.search_radius, cfg.max_lanes);
  if (candidates.empty()) {
    // No lane in range: synthesize a straight pseudo-lane along the current
    // heading so the pipeline stays total.
    const Vec2 dir{std::cos(anchor.heading), std::sin(anchor.heading)};
    std::vector<Vec2> line;
    for (int i = 0; i <= 10; ++i) line.push_back(last_obs + dir * (-10.0 + 7.5 * i));
    scene.lane_ids.push_back("__fallback__");
    scene.candidate_lanes.push_back(geo::resample_polyline(line, cfg.lane_points));
  } else {
    for (const auto* lane : candidates) {
      scene.lane_ids.push_back(lane->id);
      scene.candidate_lanes.push_back(geo::resample_centerline(*lane, cfg.lane_points));
    }
  }

  // Everything below lives in the agent-centric frame.
  for (auto& pts : scene.candidate_lanes) {
    for (auto& p : pts) p = scene.frame.to_local(p);
  }
  for (auto& p : tgt.positions) p = scene.frame.to_local(p);
  for (auto& v : tgt.velocities) v = scene.frame.rotate_to_local(v);
  scene.target = std::move(tgt);

  for (const auto& other : raw.others) {
    if (static_cast<int>(other.size()) < cfg.obs_steps) continue;
    TrajectorySequence o;
    o.role = Role::kOther;
    o.observed_len = cfg.obs_steps;
    o.timestamps.assign(other.timestamps.begin(), other.timestamps.begin() + cfg.obs_steps);
    o.positions.assign(other.positions.begin(), other.positions.begin() + cfg.obs_steps);
    o.velocities =
        other.velocities.size() == other.positions.size() && !other.velocities.empty()
            ? std::vector<Vec2>(other.velocities.begin(), other.velocities.begin() + cfg.obs_steps)
            : central_difference_velocities(o.positions, o.timestamps);
    for (auto& p : o.positions) p = scene.frame.to_local(p);
    for (auto& v : o.velocities) v = scene.frame.rotate_to_local(v);
    scene.others.push_back(std::move(o));
  }

  scene.gt_lane = geo::lane_ground_truth(scene.candidate_lanes, scene.future_positions());
  scene.ns_flag =
      geo::is_non_straight(scene.target.positions, scene.target.observed_len,
                           scene.candidate_lanes);
  if (!scene.intended_lane_id.empty()) {
    auto it = std::find(scene.lane_ids.begin(), scene.lane_ids.end(), scene.intended_lane_id);
    if (it != scene.lane_ids.end()) {
      scene.gt_lane = static_cast<int>(it - scene.lane_ids.begin());
    }
  }
  return scene;
}

namespace {

struct CsvRow {
  double timestamp;
  std::string track_id;
  std::string object_type;
  double x, y;
};

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("timestamp", 0) == 0) continue;
    std::stringstream ss(line);
    CsvRow row;
    std::string f0, f3, f4;
    if (!std::getline(ss, f0, ',') || !std::getline(ss, row.track_id, ',') ||
        !std::getline(ss, row.object_type, ',') || !std::getline(ss, f3, ',') ||
        !std::getline(ss, f4, ',')) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed CSV row");
    }
    try {
      row.timestamp = std::stod(f0);
      row.x = std::stod(f3);
      row.y = std::stod(f4);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<Scene> load_scene_file(const std::filesystem::path& file,
                                   const geo::LaneGraph& graph, const DataConfig& cfg) {
  const auto rows = read_csv(file);
  // Group by track, keeping row order within each track.
  std::map<std::string, TrajectorySequence> tracks;
  std::map<std::string, std::string> types;
  std::vector<std::string> track_order;
  for (const auto& row : rows) {
    if (!tracks.count(row.track_id)) track_order.push_back(row.track_id);
    auto& seq = tracks[row.track_id];
    seq.timestamps.push_back(row.timestamp);
    seq.positions.push_back({row.x, row.y});
    types[row.track_id] = row.object_type;
  }
  std::vector<std::string> agents;
  for (const auto& [id, type] : types) {
    if (type == "AGENT") agents.push_back(id);
  }
  if (agents.size() != 1) {
    throw DataError(file.filename().string() + ": expected 1 AGENT track, found " +
                    std::to_string(agents.size()));
  }

  auto make_raw = [&](const std::string& target_id) {
    RawScene raw;
    raw.source = file.stem().string();
    raw.target = tracks.at(target_id);
    for (const auto& id : track_order) {
      if (id != target_id) raw.others.push_back(tracks.at(id));
    }
    return raw;
  };

  std::vector<std::string> targets = {agents[0]};
  if (cfg.promote_all_tracks) {
    for (const auto& id : track_order) {
      if (id != agents[0] && static_cast<int>(tracks.at(id).size()) >= cfg.total_steps()) {
        targets.push_back(id);
      }
    }
  }
  std::vector<Scene> scenes;
  for (const auto& tid : targets) {
    Scene s = build_scene(make_raw(tid), graph, cfg);
    if (targets.size() > 1) s.source += ":" + tid;
    scenes.push_back(std::move(s));
  }
  return scenes;
}

std::vector<Scene> load_dataset(const std::filesystem::path& traj_dir,
                                const std::filesystem::path& map_path, const DataConfig& cfg) {
  const geo::LaneGraph graph = load_map(map_path);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(traj_dir)) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  for (const auto& file : files) {
    try {
      auto file_scenes = load_scene_file(file, graph, cfg);
      std::move(file_scenes.begin(), file_scenes.end(), std::back_inserter(scenes));
    } catch (const DataError& e) {
      std::cerr << "warning: skipping " << file.filename().string() << ": " << e.what() << "\n";
    }
  }
  return scenes;
}

void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& out_dir,
                   const GenConfig& cfg, uint64_t seed) {
  std::filesystem::create_directories(out_dir / "scenes");
  save_map(ds.graph, out_dir / "map.json");
  json manifest;
  manifest["seed"] = seed;
  manifest["counts"] = cfg.counts;
  manifest["num_scenes"] = ds.raw.size();
  manifest["scenes"] = json::array();
  int ns_count = 0;
  char buf[160];
  for (size_t i = 0; i < ds.raw.size(); ++i) {
    const RawScene& raw = ds.raw[i];
    std::snprintf(buf, sizeof(buf), "%06zu.csv", i);
    const std::string fname = buf;
    std::ofstream out(out_dir / "scenes" / fname);
    if (!out) throw DataError("cannot write " + (out_dir / "scenes" / fname).string());
    out << "timestamp,track_id,object_type,x,y\n";
    auto emit = [&](const TrajectorySequence& seq, const std::string& id,
                    const std::string& type) {
      for (size_t k = 0; k < seq.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%s,%s,%.17g,%.17g", seq.timestamps[k], id.c_str(),
                      type.c_str(), seq.positions[k].x, seq.positions[k].y);
        out << buf << "\n";
      }
    };
    emit(raw.target, "agent_0", "AGENT");
    for (size_t k = 0; k < raw.others.size(); ++k) {
      emit(raw.others[k], "other_" + std::to_string(k), "OTHERS");
    }
    json js;
    js["file"] = "scenes/" + fname;
    js["behavior"] = raw.behavior;
    js["intended_lane"] = raw.intended_lane_id;
    js["ns"] = ds.scenes[i].ns_flag;
    manifest["scenes"].push_back(std::move(js));
    if (ds.scenes[i].ns_flag) ++ns_count;
  }
  json bc = json::object();
  for (const auto& s : ds.raw) {
    bc[s.behavior] = bc.value(s.behavior, 0) + 1;
  }
  manifest["behavior_counts"] = bc;
  manifest["ns_fraction"] = ds.raw.empty() ? 0.0 : double(ns_count) / double(ds.raw.size());
  std::ofstream mout(out_dir / "manifest.json");
  if (!mout) throw DataError("cannot write manifest.json");
  mout << manifest.dump(1) << "\n";
}

std::pair<std::vector<Scene>, std::vector<Scene>> split(std::vector<Scene> scenes,
                                                        double train_ratio, double val_ratio,
                                                        uint64_t seed) {
  if (train_ratio <= 0 || val_ratio <= 0 || std::fabs(train_ratio + val_ratio - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  std::vector<size_t> idx(scenes.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const size_t n_train = static_cast<size_t>(std::llround(train_ratio * double(scenes.size())));
  std::vector<Scene> train, val;
  for (size_t i = 0; i < idx.size(); ++i) {
    (i < n_train ? train : val).push_back(std::move(scenes[idx[i]]));
  }
  return {std::move(train), std::move(val)};
}

std::vector<SceneBatch> make_batches(const std::vector<Scene>& scenes, int batch_size,
                                     uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<size_t> idx(scenes.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<SceneBatch> out;
  for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch_size)) {
    SceneBatch b;
    const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch_size));
    for (size_t i = start; i < end; ++i) b.scenes.push_back(&scenes[idx[i]]);
    for (const Scene* s : b.scenes) {
      b.max_lanes = std::max(b.max_lanes, static_cast<int>(s->candidate_lanes.size()));
      b.max_others = std::max(b.max_others, static_cast<int>(s->others.size()));
    }
    for (const Scene* s : b.scenes) {
      std::vector<uint8_t> lm(static_cast<size_t>(b.max_lanes), 0);
      std::vector<uint8_t> om(static_cast<size_t>(b.max_others), 0);
      for (size_t i = 0; i < s->candidate_lanes.size(); ++i) lm[i] = 1;
      for (size_t i = 0; i < s->others.size(); ++i) om[i] = 1;
      b.lane_mask.push_back(std::move(lm));
      b.other_mask.push_back(std::move(om));
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace laneattn::data
