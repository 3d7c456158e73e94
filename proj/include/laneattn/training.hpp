#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laneattn/model.hpp"
#include "laneattn/scene.hpp"

namespace laneattn::train {

/// Label-smoothed lane target: p_s on the ground-truth lane, (1-p_s)/(n-1)
/// elsewhere; a single lane gets probability 1.
std::vector<double> smoothed_lane_target(int n_lanes, int gt_lane, double p_s);

/// Cross-entropy with smoothed targets, divided by the lane count.
/// Graph form plus a plain-value convenience overload.
diff::Var lane_loss(diff::Var probs, const std::vector<double>& targets);
double lane_loss_value(const std::vector<double>& probs, const std::vector<double>& targets);

/// Bivariate-Gaussian negative log likelihood summed over timesteps.
diff::Var position_nll(const std::vector<net::DecodedStep>& steps,
                       const std::vector<geo::Vec2>& gt);
double position_nll_value(const std::vector<net::GaussianStep>& steps,
                          const std::vector<geo::Vec2>& gt);

struct LossBreakdown {
  diff::Var total;
  double lane = 0.0;
  double position = 0.0;
  double total_value() const { return lane + position; }
};

/// Training-mode loss: decoder is fed the ground-truth lane feature.
LossBreakdown total_loss(diff::Tape& tape, const net::BoundParams& params,
                         const data::Scene& scene, double p_s);

struct TrainConfig {
  // Desk-scale defaults: batch 32, 60 epochs at 1e-2 then 5 at 1e-3.
  int batch_size = 32;
  double lr_phase1 = 1e-2;
  int epochs_phase1 = 60;
  double lr_phase2 = 1e-3;
  int epochs_phase2 = 5;
  double p_s = 0.8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  double val_ratio = 0.2;
  uint64_t seed = 0;

  int total_epochs() const { return epochs_phase1 + epochs_phase2; }
  void validate() const;

  /// The published schedule: batch 1024, 1e-2 for 50 epochs then 1e-3 for 5.
  static TrainConfig published();
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long step = 0;
};

/// Global-norm clip then a bias-corrected Adam update. Returns false (and
/// leaves everything untouched) when any gradient is non-finite.
bool adam_step(net::ParamStore& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_total = 0.0;
  double train_lane = 0.0;
  double train_pos = 0.0;
  double val_total = 0.0;
  double val_ade1 = 0.0;
  std::string to_json() const;
};

struct TrainResult {
  net::ParamStore params;       // final-epoch parameters
  net::ParamStore best_params;  // lowest val ADE(K=1)
  std::vector<EpochLog> history;
  int best_epoch = 0;
};

struct Checkpoint {
  net::ModelConfig model;
  net::ParamStore params;
  std::optional<AdamState> adam;
  int epoch = 0;
  std::string config_echo;  // JSON echo of the run configuration
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Two-phase training over pre-split scene lists. Writes last.bin/best.bin and
/// a JSONL epoch log under out_dir when provided. Deterministic for a fixed
/// seed. Set `resume` to continue from an existing last.bin.
TrainResult train(const std::vector<data::Scene>& train_scenes,
                  const std::vector<data::Scene>& val_scenes, const net::ModelConfig& model_cfg,
                  const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  bool resume = false,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

}  // namespace laneattn::train
