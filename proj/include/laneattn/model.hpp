#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laneattn/autograd.hpp"
#include "laneattn/scene.hpp"

namespace laneattn::net {

struct ModelConfig {
  int obs_steps = 20;
  int horizon = 30;
  int lane_points = 10;
  int traj_hidden = 64;    // per trajectory LSTM; motion feature is 2x this
  int lane_channels = 64;  // conv channels in the lane encoder
  int lane_feature = 128;
  int embed = 64;          // attention embedding size (W_t, W_l, W_I)
  int dec_hidden = 128;
  bool use_lanes = true;
  bool use_interaction = true;
  double sigma_min = 1e-3;
  double sigma_max = 1e3;
  double rho_scale = 0.999;

  int motion_feature() const { return 2 * traj_hidden; }
  int dec_input() const { return 2 * motion_feature() + lane_feature; }

  /// Reduced sizes for fast tests and gradient checks.
  static ModelConfig tiny() {
    ModelConfig c;
    c.traj_hidden = 4;
    c.lane_channels = 4;
    c.lane_feature = 8;
    c.embed = 4;
    c.dec_hidden = 8;
    return c;
  }

  /// Desk-scale training sizes.
  static ModelConfig compact() {
    ModelConfig c;
    c.traj_hidden = 32;
    c.lane_channels = 32;
    c.lane_feature = 64;
    c.embed = 32;
    c.dec_hidden = 64;
    return c;
  }
};

using ParamStore = std::map<std::string, Tensor>;

ParamStore init_params(const ModelConfig& cfg, uint64_t seed);

/// Parameter leaves bound to one tape for one forward/backward pass.
struct BoundParams {
  std::map<std::string, diff::Var> vars;
  const ModelConfig* cfg = nullptr;

  diff::Var at(const std::string& name) const;
};

BoundParams bind_params(diff::Tape& tape, const ParamStore& params, const ModelConfig& cfg);

/// Final hidden states of the position and velocity LSTMs, concatenated.
diff::Var encode_trajectory(diff::Tape& tape, const BoundParams& p,
                            const std::vector<geo::Vec2>& positions,
                            const std::vector<geo::Vec2>& velocities);

/// conv(k=1) -> tanh -> conv(k=1) -> tanh -> max-pool over points -> affine -> tanh.
diff::Var encode_lane(diff::Tape& tape, const BoundParams& p,
                      const std::vector<geo::Vec2>& centerline);

/// Dot-product attention over embedded lane features. Returns the softmax Var
/// over unmasked lanes plus the indices it covers.
struct LaneAttention {
  diff::Var probs;            // over unmasked lanes, in `indices` order
  std::vector<int> indices;   // positions of unmasked lanes in the input list

  /// Probability vector over all input lanes; masked entries are exactly 0.
  std::vector<double> full_probabilities(int n_lanes) const;
};

LaneAttention lane_attention(diff::Tape& tape, const BoundParams& p, diff::Var target_feature,
                             const std::vector<diff::Var>& lane_features,
                             const std::vector<uint8_t>& mask);

/// Softmax-weighted sum of the other agents' motion features with a shared
/// embedding on both sides. Zero agents yields the zero vector.
diff::Var interaction(diff::Tape& tape, const BoundParams& p, diff::Var target_feature,
                      const std::vector<diff::Var>& other_features,
                      const std::vector<uint8_t>& mask);

/// One decoded timestep, still attached to the graph.
struct DecodedStep {
  diff::Var mean;   // [2], absolute position in the normalized frame
  diff::Var sigma;  // [2], positive
  diff::Var rho;    // [1], within (-1, 1)
};

std::vector<DecodedStep> decode(diff::Tape& tape, const BoundParams& p, diff::Var target_feature,
                                diff::Var interaction_feature, diff::Var lane_feature,
                                int horizon);

// Plain inference-side outputs.
struct GaussianStep {
  double mu_x, mu_y, sigma_x, sigma_y, rho;
};

struct GaussianTrajectory {
  std::vector<GaussianStep> steps;
  double probability = 0.0;
  int source_lane = -1;      // candidate index; -1 for sampled hypotheses
  std::string lane_id;
  bool sampled = false;
};

/// Encodes the scene once and runs the full forward pass (no loss terms).
struct ForwardPass {
  diff::Var target_feature;
  std::vector<diff::Var> lane_features;
  LaneAttention attention;
  diff::Var interaction_feature;
};

ForwardPass forward_scene(diff::Tape& tape, const BoundParams& p, const data::Scene& scene,
                          const std::vector<uint8_t>& lane_mask = {},
                          const std::vector<uint8_t>& other_mask = {});

/// K ranked hypotheses in the city frame; lanes sorted by attention
/// probability, extras sampled from the top hypothesis when K exceeds the
/// lane count.
std::vector<GaussianTrajectory> predict_multimodal(const data::Scene& scene,
                                                   const ParamStore& params,
                                                   const ModelConfig& cfg, int k, uint64_t seed);

/// Decode conditioned on one specific candidate lane (city frame).
GaussianTrajectory predict_for_lane(const data::Scene& scene, const ParamStore& params,
                                    const ModelConfig& cfg, int lane_index);

}  // namespace laneattn::net
