#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "laneattn/dataset.hpp"
#include "laneattn/model.hpp"

namespace laneattn::metrics {

/// Mean / final Euclidean error between a predicted mean trajectory and the
/// ground truth (same frame, same length).
double ade(const std::vector<net::GaussianStep>& pred, const std::vector<geo::Vec2>& gt);
double fde(const std::vector<net::GaussianStep>& pred, const std::vector<geo::Vec2>& gt);

/// Best-of-K errors over ranked hypotheses: the top K by probability (ties
/// broken toward the earlier hypothesis) are considered, minFDE is the lowest
/// final error among them and minADE is the mean error of that same
/// hypothesis. K = 1 reduces to the most probable hypothesis.
struct MinK {
  double min_ade = 0.0;
  double min_fde = 0.0;
  int best = -1;  // index of the hypothesis achieving minFDE
};

MinK min_k(const std::vector<net::GaussianTrajectory>& hypotheses,
           const std::vector<geo::Vec2>& gt, int k);

/// Fraction-style helpers evaluated on a single hypothesis (city frame).
bool inside_drivable_area(const std::vector<net::GaussianStep>& pred, const geo::LaneGraph& graph);
bool is_miss(double final_error, double threshold = 2.0);  // strictly greater

/// Constant-velocity baseline: mean of the last (up to) 5 observed velocities
/// extrapolated over the horizon; unit sigmas, zero correlation, probability 1.
net::GaussianTrajectory constant_velocity_predict(const data::Scene& scene, int horizon);

struct MetricBlock {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double dac = 0.0;
  double miss_rate = 0.0;
};

/// Aggregate report: one block per K, for the full set and the non-straight
/// (NS) subset.
struct EvalReport {
  std::vector<int> ks;
  std::map<int, MetricBlock> full;
  std::map<int, MetricBlock> ns;
  int n_scenes = 0;
  int n_ns = 0;
  double miss_threshold = 2.0;

  std::string to_json() const;
  std::string to_text() const;
};

/// Per-scene prediction callback; allows swapping the model for the baseline.
using Predictor =
    std::function<std::vector<net::GaussianTrajectory>(const data::Scene&, int k)>;

EvalReport evaluate(const std::vector<data::Scene>& scenes, const geo::LaneGraph& graph,
                    const Predictor& predict, const std::vector<int>& ks,
                    double miss_threshold = 2.0);

/// Convenience wrapper around the trained model.
EvalReport evaluate_model(const std::vector<data::Scene>& scenes, const geo::LaneGraph& graph,
                          const net::ParamStore& params, const net::ModelConfig& cfg,
                          const std::vector<int>& ks, uint64_t seed,
                          double miss_threshold = 2.0);

}  // namespace laneattn::metrics
