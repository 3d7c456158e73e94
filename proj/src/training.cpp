#include "laneattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

#include "json.hpp"
#include "laneattn/dataset.hpp"
#include "laneattn/rng.hpp"

namespace laneattn::train {

using data::Scene;
using diff::Tape;
using diff::Var;
using geo::Vec2;
using net::ModelConfig;
using net::ParamStore;
using nlohmann::json;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

std::vector<double> smoothed_lane_target(int n_lanes, int gt_lane, double p_s) {
  if (n_lanes < 1) throw UsageError("smoothed_lane_target: need at least one lane");
  if (gt_lane < 0 || gt_lane >= n_lanes) throw UsageError("smoothed_lane_target: bad gt index");
  if (p_s <= 0.0 || p_s > 1.0) throw ConfigError("p_s must lie in (0, 1]");
  if (n_lanes == 1) return {1.0};
  std::vector<double> t(static_cast<size_t>(n_lanes), (1.0 - p_s) / (n_lanes - 1));
  t[static_cast<size_t>(gt_lane)] = p_s;
  return t;
}

Var lane_loss(Var probs, const std::vector<double>& targets) {
  const int n = probs.value().dim(0);
  if (n != static_cast<int>(targets.size())) {
    throw DimensionError("lane_loss: " + std::to_string(n) + " probabilities vs " +
                         std::to_string(targets.size()) + " targets");
  }
  Var t = probs.tape->constant(Tensor::vector(targets));
  Var logp = diff::log(diff::clamp(probs, 1e-12, std::numeric_limits<double>::infinity()));
  return diff::mul_scalar(diff::dot(t, logp), -1.0 / n);
}

double lane_loss_value(const std::vector<double>& probs, const std::vector<double>& targets) {
  if (probs.size() != targets.size()) {
    throw DimensionError("lane_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(targets.size()) + " targets");
  }
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += targets[i] * std::log(std::max(probs[i], 1e-12));
  }
  return -acc / static_cast<double>(probs.size());
}

Var position_nll(const std::vector<net::DecodedStep>& steps, const std::vector<Vec2>& gt) {
  if (steps.empty() || steps.size() != gt.size()) {
    throw DimensionError("position_nll: " + std::to_string(steps.size()) + " steps vs " +
                         std::to_string(gt.size()) + " ground-truth points");
  }
  Tape& tape = *steps[0].mean.tape;
  Var acc = tape.constant(Tensor::scalar(0.0));
  for (size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    Var d = diff::sub(s.mean, tape.constant(Tensor({2}, {gt[i].x, gt[i].y})));
    Var zx = diff::div(diff::slice(d, 0, 1), diff::slice(s.sigma, 0, 1));
    Var zy = diff::div(diff::slice(d, 1, 1), diff::slice(s.sigma, 1, 1));
    Var z = diff::sub(diff::add(diff::mul(zx, zx), diff::mul(zy, zy)),
                      diff::mul_scalar(diff::mul(s.rho, diff::mul(zx, zy)), 2.0));
    Var omr = diff::add_scalar(diff::mul_scalar(diff::mul(s.rho, s.rho), -1.0), 1.0);
    Var term = diff::add(
        diff::add(diff::log(diff::slice(s.sigma, 0, 1)), diff::log(diff::slice(s.sigma, 1, 1))),
        diff::add(diff::mul_scalar(diff::log(omr), 0.5),
                  diff::mul_scalar(diff::div(z, omr), 0.5)));
    acc = diff::add(acc, term);
  }
  return diff::add_scalar(acc, kLog2Pi * static_cast<double>(steps.size()));
}

double position_nll_value(const std::vector<net::GaussianStep>& steps,
                          const std::vector<Vec2>& gt) {
  if (steps.empty() || steps.size() != gt.size()) {
    throw DimensionError("position_nll: " + std::to_string(steps.size()) + " steps vs " +
                         std::to_string(gt.size()) + " ground-truth points");
  }
  double acc = 0.0;
  for (size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (!(s.sigma_x > 0.0) || !(s.sigma_y > 0.0) || !(std::fabs(s.rho) < 1.0) ||
        !std::isfinite(s.mu_x) || !std::isfinite(s.mu_y)) {
      throw NumericError("position_nll: invalid Gaussian step at t=" + std::to_string(i));
    }
    const double zx = (gt[i].x - s.mu_x) / s.sigma_x;
    const double zy = (gt[i].y - s.mu_y) / s.sigma_y;
    const double omr = 1.0 - s.rho * s.rho;
    acc += kLog2Pi + std::log(s.sigma_x) + std::log(s.sigma_y) + 0.5 * std::log(omr) +
           (zx * zx + zy * zy - 2.0 * s.rho * zx * zy) / (2.0 * omr);
  }
  return acc;
}

LossBreakdown total_loss(Tape& tape, const net::BoundParams& params, const Scene& scene,
                         double p_s) {
  const ModelConfig& cfg = *params.cfg;
  net::ForwardPass fwd = net::forward_scene(tape, params, scene);
  LossBreakdown out;
  Var lane_feat = tape.constant(Tensor({cfg.lane_feature}));
  Var lane_term;
  if (cfg.use_lanes) {
    if (scene.gt_lane < 0 || scene.gt_lane >= static_cast<int>(scene.candidate_lanes.size())) {
      throw DataError("scene " + scene.source + ": gt_lane out of range");
    }
    const auto targets = smoothed_lane_target(
        static_cast<int>(scene.candidate_lanes.size()), scene.gt_lane, p_s);
    lane_term = lane_loss(fwd.attention.probs, targets);
    lane_feat = fwd.lane_features[static_cast<size_t>(scene.gt_lane)];
    out.lane = lane_term.value()[0];
  }
  auto decoded = net::decode(tape, params, fwd.target_feature, fwd.interaction_feature,
                             lane_feat, cfg.horizon);
  Var pos_term = position_nll(decoded, scene.future_positions());
  out.position = pos_term.value()[0];
  out.total = cfg.use_lanes ? diff::add(lane_term, pos_term) : pos_term;
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_phase1 <= 0 || lr_phase2 <= 0) throw ConfigError("learning rates must be positive");
  if (epochs_phase1 < 0 || epochs_phase2 < 0 || total_epochs() < 1) {
    throw ConfigError("epoch counts must be non-negative with at least one epoch in total");
  }
  if (p_s <= 0.0 || p_s > 1.0) throw ConfigError("p_s must lie in (0, 1]");
  if (clip_norm <= 0) throw ConfigError("clip_norm must be positive");
}

TrainConfig TrainConfig::published() {
  TrainConfig c;
  c.batch_size = 1024;
  c.epochs_phase1 = 50;
  c.epochs_phase2 = 5;
  return c;
}

bool adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  double norm2 = 0.0;
  for (const auto& [name, g] : grads) {
    if (!params.count(name)) throw UsageError("adam_step: gradient for unknown parameter " + name);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(g[i])) {
        std::cerr << "warning: non-finite gradient for " << name << ", skipping step\n";
        return false;
      }
      norm2 += g[i] * g[i];
    }
  }
  const double norm = std::sqrt(norm2);
  const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
  return true;
}

std::string EpochLog::to_json() const {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%d,\"lr\":%.17g,\"train_total\":%.17g,\"train_lane\":%.17g,"
                "\"train_pos\":%.17g,\"val_total\":%.17g,\"val_ade1\":%.17g}",
                epoch, lr, train_total, train_lane, train_pos, val_total, val_ade1);
  return buf;
}

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_tensor(std::ofstream& out, const Tensor& t) {
  write_u32(out, static_cast<uint32_t>(t.ndim()));
  for (int d : t.shape()) write_u32(out, static_cast<uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * sizeof(double)));
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_string(std::ifstream& in) {
  const uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}
Tensor read_tensor(std::ifstream& in) {
  const uint32_t ndim = read_u32(in);
  std::vector<int> shape(ndim);
  for (auto& d : shape) d = static_cast<int>(read_u32(in));
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data().data()),
          static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  return t;
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"obs_steps", c.obs_steps},
              {"horizon", c.horizon},
              {"lane_points", c.lane_points},
              {"traj_hidden", c.traj_hidden},
              {"lane_channels", c.lane_channels},
              {"lane_feature", c.lane_feature},
              {"embed", c.embed},
              {"dec_hidden", c.dec_hidden},
              {"use_lanes", c.use_lanes},
              {"use_interaction", c.use_interaction},
              {"sigma_min", c.sigma_min},
              {"sigma_max", c.sigma_max},
              {"rho_scale", c.rho_scale}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.obs_steps = j.at("obs_steps");
  c.horizon = j.at("horizon");
  c.lane_points = j.at("lane_points");
  c.traj_hidden = j.at("traj_hidden");
  c.lane_channels = j.at("lane_channels");
  c.lane_feature = j.at("lane_feature");
  c.embed = j.at("embed");
  c.dec_hidden = j.at("dec_hidden");
  c.use_lanes = j.at("use_lanes");
  c.use_interaction = j.at("use_interaction");
  c.sigma_min = j.at("sigma_min");
  c.sigma_max = j.at("sigma_max");
  c.rho_scale = j.at("rho_scale");
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write("LATC", 4);
  write_u32(out, 1);  // format version
  write_string(out, model_config_to_json(ckpt.model).dump());
  write_string(out, ckpt.config_echo);
  write_u32(out, static_cast<uint32_t>(ckpt.epoch));
  write_u64(out, ckpt.params.size());
  for (const auto& [name, t] : ckpt.params) {
    write_string(out, name);
    write_tensor(out, t);
  }
  out.put(ckpt.adam ? 1 : 0);
  if (ckpt.adam) {
    write_u64(out, static_cast<uint64_t>(ckpt.adam->step));
    for (const auto& [name, t] : ckpt.adam->m) {
      write_string(out, name);
      write_tensor(out, t);
    }
    for (const auto& [name, t] : ckpt.adam->v) {
      write_string(out, name);
      write_tensor(out, t);
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "LATC", 4) != 0) throw DataError("not a checkpoint file: " + path.string());
  const uint32_t version = read_u32(in);
  if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.model = model_config_from_json(json::parse(read_string(in)));
  ckpt.config_echo = read_string(in);
  ckpt.epoch = static_cast<int>(read_u32(in));
  const uint64_t n = read_u64(in);
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    ckpt.params.emplace(std::move(name), read_tensor(in));
  }
  if (in.get() == 1) {
    AdamState st;
    st.step = static_cast<long>(read_u64(in));
    for (uint64_t i = 0; i < n; ++i) {
      std::string name = read_string(in);
      st.m.emplace(std::move(name), read_tensor(in));
    }
    for (uint64_t i = 0; i < n; ++i) {
      std::string name = read_string(in);
      st.v.emplace(std::move(name), read_tensor(in));
    }
    ckpt.adam = std::move(st);
  }
  if (!in) throw DataError("truncated checkpoint: " + path.string());
  return ckpt;
}

namespace {

double mean_ade_k1(const std::vector<Scene>& scenes, const ParamStore& params,
                   const ModelConfig& cfg) {
  if (scenes.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& scene : scenes) {
    const auto preds = net::predict_multimodal(scene, params, cfg, 1, 0);
    const auto gt = scene.future_positions_city();
    double d = 0.0;
    for (size_t i = 0; i < gt.size(); ++i) {
      d += std::hypot(preds[0].steps[i].mu_x - gt[i].x, preds[0].steps[i].mu_y - gt[i].y);
    }
    acc += d / static_cast<double>(gt.size());
  }
  return acc / static_cast<double>(scenes.size());
}

}  // namespace

TrainResult train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                  const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& out_dir, bool resume,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_scenes.empty()) throw UsageError("train: empty training set");

  TrainResult result;
  AdamState adam;
  int start_epoch = 0;
  if (resume && out_dir && std::filesystem::exists(*out_dir / "last.bin")) {
    Checkpoint ckpt = load_checkpoint(*out_dir / "last.bin");
    result.params = std::move(ckpt.params);
    if (ckpt.adam) adam = std::move(*ckpt.adam);
    start_epoch = ckpt.epoch;
  } else {
    result.params = net::init_params(model_cfg, Rng(cfg.seed).fork("params").next_u64());
  }

  std::ofstream log_file;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log_file.open(*out_dir / "train_log.jsonl", start_epoch > 0 ? std::ios::app : std::ios::out);
  }

  double best_ade = std::numeric_limits<double>::infinity();
  result.best_params = result.params;
  const json echo = {{"model", model_config_to_json(model_cfg)},
                     {"batch_size", cfg.batch_size},
                     {"lr_phase1", cfg.lr_phase1},
                     {"epochs_phase1", cfg.epochs_phase1},
                     {"lr_phase2", cfg.lr_phase2},
                     {"epochs_phase2", cfg.epochs_phase2},
                     {"p_s", cfg.p_s},
                     {"clip_norm", cfg.clip_norm},
                     {"seed", cfg.seed}};

  for (int epoch = start_epoch; epoch < cfg.total_epochs(); ++epoch) {
    const double lr = epoch < cfg.epochs_phase1 ? cfg.lr_phase1 : cfg.lr_phase2;
    const uint64_t batch_seed =
        Rng(cfg.seed).fork("batches-epoch-" + std::to_string(epoch)).next_u64();
    const auto batches = data::make_batches(train_scenes, cfg.batch_size, batch_seed);

    double sum_total = 0.0, sum_lane = 0.0, sum_pos = 0.0;
    for (const auto& batch : batches) {
      std::map<std::string, Tensor> acc;
      for (const Scene* scene : batch.scenes) {
        Tape tape;
        net::BoundParams bound = net::bind_params(tape, result.params, model_cfg);
        LossBreakdown loss = total_loss(tape, bound, *scene, cfg.p_s);
        tape.backward(loss.total);
        sum_total += loss.total_value();
        sum_lane += loss.lane;
        sum_pos += loss.position;
        const double inv = 1.0 / static_cast<double>(batch.scenes.size());
        for (auto& [name, g] : tape.gradients()) {
          auto [it, inserted] = acc.try_emplace(name, g.shape());
          for (int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i] * inv;
        }
      }
      adam_step(result.params, acc, adam, lr, cfg);
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.train_total = sum_total / static_cast<double>(train_scenes.size());
    log.train_lane = sum_lane / static_cast<double>(train_scenes.size());
    log.train_pos = sum_pos / static_cast<double>(train_scenes.size());

    double val_total = 0.0;
    for (const Scene& scene : val_scenes) {
      Tape tape;
      net::BoundParams bound = net::bind_params(tape, result.params, model_cfg);
      val_total += total_loss(tape, bound, scene, cfg.p_s).total_value();
    }
    log.val_total = val_scenes.empty() ? 0.0 : val_total / static_cast<double>(val_scenes.size());
    log.val_ade1 = mean_ade_k1(val_scenes, result.params, model_cfg);
    result.history.push_back(log);

    const double selection = val_scenes.empty() ? log.train_total : log.val_ade1;
    if (selection < best_ade) {
      best_ade = selection;
      result.best_params = result.params;
      result.best_epoch = log.epoch;
    }

    if (out_dir) {
      Checkpoint last{model_cfg, result.params, adam, epoch + 1, echo.dump()};
      save_checkpoint(last, *out_dir / "last.bin");
      Checkpoint best{model_cfg, result.best_params, std::nullopt, result.best_epoch,
                      echo.dump()};
      save_checkpoint(best, *out_dir / "best.bin");
      log_file << log.to_json() << "\n";
      log_file.flush();
    }
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace laneattn::train
