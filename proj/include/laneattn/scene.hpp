#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laneattn/geometry.hpp"

namespace laneattn::data {

enum class Role { kTarget, kOther };

/// One agent track. For the target the full observed+future window is
/// present; other agents carry only their observed prefix.
struct TrajectorySequence {
  std::vector<double> timestamps;       // seconds, strictly increasing
  std::vector<geo::Vec2> positions;     // meters
  std::vector<geo::Vec2> velocities;    // m/s
  Role role = Role::kOther;
  int observed_len = 0;

  size_t size() const { return positions.size(); }
};

/// One forecasting sample, fully normalized to the agent-centric frame.
struct Scene {
  TrajectorySequence target;
  std::vector<TrajectorySequence> others;
  std::vector<std::vector<geo::Vec2>> candidate_lanes;  // resampled, normalized
  std::vector<std::string> lane_ids;
  int gt_lane = 0;
  bool ns_flag = false;
  geo::Frame frame;  // normalized -> city transform

  std::string behavior = "unknown";  // generator tag, "unknown" for loaded data
  std::string source;                // file stem when loaded from disk
  std::string intended_lane_id;      // generator ground truth, empty otherwise

  std::vector<geo::Vec2> observed_positions() const {
    return {target.positions.begin(), target.positions.begin() + target.observed_len};
  }
  std::vector<geo::Vec2> future_positions() const {
    return {target.positions.begin() + target.observed_len, target.positions.end()};
  }
  std::vector<geo::Vec2> future_positions_city() const {
    std::vector<geo::Vec2> out;
    out.reserve(target.positions.size() - static_cast<size_t>(target.observed_len));
    for (size_t i = static_cast<size_t>(target.observed_len); i < target.positions.size(); ++i) {
      out.push_back(frame.to_city(target.positions[i]));
    }
    return out;
  }
};

/// Batch view over scenes with padding masks for the variable lane and agent
/// counts. mask entry 1 = real, 0 = padding.
struct SceneBatch {
  std::vector<const Scene*> scenes;
  int max_lanes = 0;
  int max_others = 0;
  std::vector<std::vector<uint8_t>> lane_mask;   // [scene][max_lanes]
  std::vector<std::vector<uint8_t>> other_mask;  // [scene][max_others]
};

}  // namespace laneattn::data
