#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "laneattn/scene.hpp"

namespace laneattn::data {

struct DataConfig {
  double hz = 10.0;
  int obs_steps = 20;
  int fut_steps = 30;
  double search_radius = 30.0;
  int max_lanes = 6;
  int lane_points = 10;
  bool promote_all_tracks = false;  // use every fully covered track as a target

  int total_steps() const { return obs_steps + fut_steps; }
};

/// Behavior mix for the synthetic generator: class name -> scene count.
/// Classes: keep_lane, lane_change_left, lane_change_right, turn_left,
/// turn_right, fork_branch.
struct GenConfig {
  std::map<std::string, int> counts;
  DataConfig data;
  double noise_sigma = 0.1;  // meters
  double speed_min = 3.0;    // m/s
  double speed_max = 15.0;

  int total() const;
  void validate() const;
  static GenConfig preset(const std::string& name);  // "tiny" (64) or "small" (2000)
};

/// Raw (city-frame) material for one scene, before normalization. Kept so the
/// same bytes can be written to disk and re-assembled via build_scene.
struct RawScene {
  TrajectorySequence target;  // city frame, velocities optional (empty)
  std::vector<TrajectorySequence> others;
  std::string behavior = "unknown";
  std::string intended_lane_id;
  std::string source;
};

/// Shared assembly path: candidate search, resampling, normalization, velocity
/// completion, ground-truth lane labeling, NS flagging.
Scene build_scene(const RawScene& raw, const geo::LaneGraph& graph, const DataConfig& cfg);

geo::LaneGraph load_map(const std::filesystem::path& path);
void save_map(const geo::LaneGraph& graph, const std::filesystem::path& path);

/// One trajectory CSV -> scenes (one per promoted target; normally just the
/// AGENT track). Throws DataError on malformed input.
std::vector<Scene> load_scene_file(const std::filesystem::path& file, const geo::LaneGraph& graph,
                                   const DataConfig& cfg);

std::vector<Scene> load_dataset(const std::filesystem::path& traj_dir,
                                const std::filesystem::path& map_path, const DataConfig& cfg);

struct SyntheticDataset {
  geo::LaneGraph graph;
  std::vector<RawScene> raw;
  std::vector<Scene> scenes;
};

SyntheticDataset generate_synthetic(const GenConfig& cfg, uint64_t seed);

/// Writes scenes/NNNNNN.csv, map.json and manifest.json under out_dir using
/// the same CSV/JSON formats load_dataset consumes.
void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& out_dir,
                   const GenConfig& cfg, uint64_t seed);

std::pair<std::vector<Scene>, std::vector<Scene>> split(std::vector<Scene> scenes,
                                                        double train_ratio, double val_ratio,
                                                        uint64_t seed);

std::vector<SceneBatch> make_batches(const std::vector<Scene>& scenes, int batch_size,
                                     uint64_t seed);

}  // namespace laneattn::data
