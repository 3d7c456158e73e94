#include "laneattn/model.hpp"

#include <algorithm>
#include <cmath>

#include "laneattn/rng.hpp"

namespace laneattn::net {

using data::Scene;
using diff::Tape;
using diff::Var;
using geo::Vec2;

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, uint64_t seed) {
  const int h = cfg.traj_hidden;
  const int c = cfg.lane_channels;
  const int f = cfg.lane_feature;
  const int e = cfg.embed;
  const int dh = cfg.dec_hidden;
  const int di = cfg.dec_input();
  const int motion = cfg.motion_feature();

  ParamStore p;
  auto put = [&](const std::string& name, std::vector<int> shape, int fan_in) {
    Rng rng = Rng(seed).fork("init-" + name);
    p.emplace(name, uniform_init(std::move(shape), fan_in, rng));
  };
  auto put_lstm = [&](const std::string& prefix, int hidden, int input) {
    put(prefix + ".wx", {4 * hidden, input}, input);
    put(prefix + ".wh", {4 * hidden, hidden}, hidden);
    put(prefix + ".b", {4 * hidden}, hidden);
    Tensor& b = p.at(prefix + ".b");
    for (int i = hidden; i < 2 * hidden; ++i) b[i] += 1.0;  // forget-gate bias
  };
  put_lstm("pos_lstm", h, 2);
  put_lstm("vel_lstm", h, 2);
  put("lane.conv1.k", {c, 2, 1}, 2);
  put("lane.conv1.b", {c}, 2);
  put("lane.conv2.k", {c, c, 1}, c);
  put("lane.conv2.b", {c}, c);
  put("lane.mlp.w", {f, c}, c);
  put("lane.mlp.b", {f}, c);
  put("attn.wt", {e, motion}, motion);
  put("attn.wl", {e, f}, f);
  put("inter.wi", {e, motion}, motion);
  put_lstm("dec", dh, di);
  put("dec.head.w", {5, dh}, dh);
  put("dec.head.b", {5}, dh);
  return p;
}

Var BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw UsageError("unbound parameter: " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamStore& params, const ModelConfig& cfg) {
  BoundParams b;
  b.cfg = &cfg;
  for (const auto& [name, tensor] : params) b.vars.emplace(name, tape.param(name, tensor));
  return b;
}

namespace {

Var encode_sequence(Tape& tape, const BoundParams& p, const std::string& prefix,
                    const std::vector<Vec2>& seq, int hidden) {
  Var wx = p.at(prefix + ".wx");
  Var wh = p.at(prefix + ".wh");
  Var b = p.at(prefix + ".b");
  Var h = tape.constant(Tensor({hidden}));
  Var c = tape.constant(Tensor({hidden}));
  for (const Vec2& v : seq) {
    Var x = tape.constant(Tensor({2}, {v.x, v.y}));
    auto [h2, c2] = diff::lstm_step(x, h, c, wx, wh, b);
    h = h2;
    c = c2;
  }
  return h;
}

}  // namespace

Var encode_trajectory(Tape& tape, const BoundParams& p, const std::vector<Vec2>& positions,
                      const std::vector<Vec2>& velocities) {
  const ModelConfig& cfg = *p.cfg;
  if (static_cast<int>(positions.size()) != cfg.obs_steps ||
      static_cast<int>(velocities.size()) != cfg.obs_steps) {
    throw DimensionError("encode_trajectory: expected " + std::to_string(cfg.obs_steps) +
                         " observed steps, got " + std::to_string(positions.size()) + "/" +
                         std::to_string(velocities.size()));
  }
  Var fp = encode_sequence(tape, p, "pos_lstm", positions, cfg.traj_hidden);
  Var fv = encode_sequence(tape, p, "vel_lstm", velocities, cfg.traj_hidden);
  return diff::concat({fp, fv});
}

Var encode_lane(Tape& tape, const BoundParams& p, const std::vector<Vec2>& centerline) {
  const ModelConfig& cfg = *p.cfg;
  if (static_cast<int>(centerline.size()) != cfg.lane_points) {
    throw DimensionError("encode_lane: expected " + std::to_string(cfg.lane_points) +
                         " centerline points, got " + std::to_string(centerline.size()));
  }
  const int L = cfg.lane_points;
  Tensor input({2, L});
  for (int i = 0; i < L; ++i) {
    input.at(0, i) = centerline[static_cast<size_t>(i)].x;
    input.at(1, i) = centerline[static_cast<size_t>(i)].y;
  }
  Var x = tape.constant(std::move(input));
  x = diff::tanh(diff::conv1d(x, p.at("lane.conv1.k"), p.at("lane.conv1.b")));
  x = diff::tanh(diff::conv1d(x, p.at("lane.conv2.k"), p.at("lane.conv2.b")));
  Var pooled = diff::max_pool_rows(x);
  return diff::tanh(diff::add(diff::matvec(p.at("lane.mlp.w"), pooled), p.at("lane.mlp.b")));
}

std::vector<double> LaneAttention::full_probabilities(int n_lanes) const {
  std::vector<double> out(static_cast<size_t>(n_lanes), 0.0);
  for (size_t i = 0; i < indices.size(); ++i) {
    out[static_cast<size_t>(indices[i])] = probs.value()[static_cast<int64_t>(i)];
  }
  return out;
}

LaneAttention lane_attention(Tape& tape, const BoundParams& p, Var target_feature,
                             const std::vector<Var>& lane_features,
                             const std::vector<uint8_t>& mask) {
  LaneAttention out;
  for (size_t i = 0; i < lane_features.size(); ++i) {
    if (mask.empty() || mask[i]) out.indices.push_back(static_cast<int>(i));
  }
  if (out.indices.empty()) throw UsageError("lane_attention: no unmasked lane");
  Var q = diff::matvec(p.at("attn.wt"), target_feature);
  std::vector<Var> logits;
  logits.reserve(out.indices.size());
  for (int idx : out.indices) {
    Var key = diff::matvec(p.at("attn.wl"), lane_features[static_cast<size_t>(idx)]);
    logits.push_back(diff::dot(q, key));
  }
  out.probs = diff::softmax(diff::concat(logits));
  return out;
}

Var interaction(Tape& tape, const BoundParams& p, Var target_feature,
                const std::vector<Var>& other_features, const std::vector<uint8_t>& mask) {
  const ModelConfig& cfg = *p.cfg;
  std::vector<int> indices;
  for (size_t i = 0; i < other_features.size(); ++i) {
    if (mask.empty() || mask[i]) indices.push_back(static_cast<int>(i));
  }
  if (indices.empty()) return tape.constant(Tensor({cfg.motion_feature()}));
  Var q = diff::matvec(p.at("inter.wi"), target_feature);
  std::vector<Var> logits;
  for (int idx : indices) {
    Var key = diff::matvec(p.at("inter.wi"), other_features[static_cast<size_t>(idx)]);
    logits.push_back(diff::dot(q, key));
  }
  Var weights = diff::softmax(diff::concat(logits));
  Var acc = tape.constant(Tensor({cfg.motion_feature()}));
  for (size_t j = 0; j < indices.size(); ++j) {
    Var w = diff::slice(weights, static_cast<int>(j), 1);
    acc = diff::add(acc, diff::smul(w, other_features[static_cast<size_t>(indices[j])]));
  }
  return acc;
}

std::vector<DecodedStep> decode(Tape& tape, const BoundParams& p, Var target_feature,
                                Var interaction_feature, Var lane_feature, int horizon) {
  const ModelConfig& cfg = *p.cfg;
  Var input = diff::concat({target_feature, interaction_feature, lane_feature});
  Var wx = p.at("dec.wx");
  Var wh = p.at("dec.wh");
  Var b = p.at("dec.b");
  Var head_w = p.at("dec.head.w");
  Var head_b = p.at("dec.head.b");
  Var h = tape.constant(Tensor({cfg.dec_hidden}));
  Var c = tape.constant(Tensor({cfg.dec_hidden}));
  std::vector<DecodedStep> steps;
  steps.reserve(static_cast<size_t>(horizon));
  Var mu_abs;  // offsets accumulate from the last observed position (the origin)
  for (int t = 0; t < horizon; ++t) {
    auto [h2, c2] = diff::lstm_step(input, h, c, wx, wh, b);
    h = h2;
    c = c2;
    Var raw = diff::add(diff::matvec(head_w, h), head_b);
    Var mu_off = diff::slice(raw, 0, 2);
    mu_abs = t == 0 ? mu_off : diff::add(mu_abs, mu_off);
    DecodedStep step;
    step.mean = mu_abs;
    step.sigma = diff::clamp(diff::exp(diff::slice(raw, 2, 2)), cfg.sigma_min, cfg.sigma_max);
    step.rho = diff::mul_scalar(diff::tanh(diff::slice(raw, 4, 1)), cfg.rho_scale);
    steps.push_back(step);
  }
  return steps;
}

ForwardPass forward_scene(Tape& tape, const BoundParams& p, const Scene& scene,
                          const std::vector<uint8_t>& lane_mask,
                          const std::vector<uint8_t>& other_mask) {
  const ModelConfig& cfg = *p.cfg;
  ForwardPass fwd;
  const std::vector<Vec2> obs_pos(scene.target.positions.begin(),
                                  scene.target.positions.begin() + scene.target.observed_len);
  const std::vector<Vec2> obs_vel(scene.target.velocities.begin(),
                                  scene.target.velocities.begin() + scene.target.observed_len);
  fwd.target_feature = encode_trajectory(tape, p, obs_pos, obs_vel);

  if (cfg.use_lanes) {
    for (const auto& lane : scene.candidate_lanes) {
      fwd.lane_features.push_back(encode_lane(tape, p, lane));
    }
    fwd.attention = lane_attention(tape, p, fwd.target_feature, fwd.lane_features, lane_mask);
  }

  if (cfg.use_interaction) {
    std::vector<Var> other_feats;
    for (const auto& other : scene.others) {
      const std::vector<Vec2> opos(other.positions.begin(),
                                   other.positions.begin() + other.observed_len);
      const std::vector<Vec2> ovel(other.velocities.begin(),
                                   other.velocities.begin() + other.observed_len);
      other_feats.push_back(encode_trajectory(tape, p, opos, ovel));
    }
    fwd.interaction_feature =
        interaction(tape, p, fwd.target_feature, other_feats, other_mask);
  } else {
    fwd.interaction_feature = tape.constant(Tensor({cfg.motion_feature()}));
  }
  return fwd;
}

namespace {

GaussianStep denormalize_step(const GaussianStep& s, const geo::Frame& frame) {
  const Vec2 mean = frame.to_city({s.mu_x, s.mu_y});
  const double ch = std::cos(frame.anchor().heading);
  const double sh = std::sin(frame.anchor().heading);
  // Covariance rotates as R * Sigma * R^T.
  const double sxx = s.sigma_x * s.sigma_x;
  const double syy = s.sigma_y * s.sigma_y;
  const double sxy = s.rho * s.sigma_x * s.sigma_y;
  const double cxx = ch * ch * sxx - 2.0 * ch * sh * sxy + sh * sh * syy;
  const double cyy = sh * sh * sxx + 2.0 * ch * sh * sxy + ch * ch * syy;
  const double cxy = ch * sh * (sxx - syy) + (ch * ch - sh * sh) * sxy;
  GaussianStep out;
  out.mu_x = mean.x;
  out.mu_y = mean.y;
  out.sigma_x = std::sqrt(std::max(cxx, 1e-12));
  out.sigma_y = std::sqrt(std::max(cyy, 1e-12));
  out.rho = std::clamp(cxy / (out.sigma_x * out.sigma_y), -0.999999, 0.999999);
  return out;
}

std::vector<GaussianStep> extract_steps(const std::vector<DecodedStep>& decoded) {
  std::vector<GaussianStep> steps;
  steps.reserve(decoded.size());
  for (const auto& d : decoded) {
    steps.push_back({d.mean.value()[0], d.mean.value()[1], d.sigma.value()[0],
                     d.sigma.value()[1], d.rho.value()[0]});
  }
  return steps;
}

}  // namespace

std::vector<GaussianTrajectory> predict_multimodal(const Scene& scene, const ParamStore& params,
                                                   const ModelConfig& cfg, int k, uint64_t seed) {
  if (k < 1) throw UsageError("predict_multimodal: K must be >= 1");
  Tape tape;
  BoundParams p = bind_params(tape, params, cfg);
  ForwardPass fwd = forward_scene(tape, p, scene);

  struct Ranked {
    int lane;
    double prob;
  };
  std::vector<Ranked> ranked;
  if (cfg.use_lanes) {
    const auto probs = fwd.attention.full_probabilities(
        static_cast<int>(scene.candidate_lanes.size()));
    for (size_t i = 0; i < probs.size(); ++i) ranked.push_back({static_cast<int>(i), probs[i]});
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.prob != b.prob) return a.prob > b.prob;
      return a.lane < b.lane;
    });
  } else {
    ranked.push_back({-1, 1.0});
  }
  const int n = static_cast<int>(ranked.size());
  const int m = std::min(k, n);

  std::vector<GaussianTrajectory> out;
  for (int i = 0; i < m; ++i) {
    Var lane_feat = ranked[static_cast<size_t>(i)].lane >= 0
                        ? fwd.lane_features[static_cast<size_t>(ranked[static_cast<size_t>(i)].lane)]
                        : tape.constant(Tensor({cfg.lane_feature}));
    auto decoded =
        decode(tape, p, fwd.target_feature, fwd.interaction_feature, lane_feat, cfg.horizon);
    GaussianTrajectory traj;
    traj.steps = extract_steps(decoded);
    traj.probability = ranked[static_cast<size_t>(i)].prob;
    traj.source_lane = ranked[static_cast<size_t>(i)].lane;
    if (traj.source_lane >= 0) traj.lane_id = scene.lane_ids[static_cast<size_t>(traj.source_lane)];
    out.push_back(std::move(traj));
  }

  if (k > n) {
    // Sample the remaining hypotheses from the top hypothesis's per-step
    // Gaussians; the top hypothesis shares its probability mass with them.
    Rng rng = Rng(seed).fork("extra-samples");
    const GaussianTrajectory top = out.front();  // copy: push_back below reallocates
    const double share = top.probability / static_cast<double>(k - n + 1);
    out.front().probability = share;
    for (int extra = 0; extra < k - n; ++extra) {
      GaussianTrajectory traj;
      traj.sampled = true;
      traj.probability = share;
      for (const auto& s : top.steps) {
        const double z1 = rng.gaussian();
        const double z2 = rng.gaussian();
        GaussianStep q = s;
        q.mu_x = s.mu_x + s.sigma_x * z1;
        q.mu_y = s.mu_y + s.sigma_y * (s.rho * z1 + std::sqrt(1.0 - s.rho * s.rho) * z2);
        traj.steps.push_back(q);
      }
      out.push_back(std::move(traj));
    }
  }

  double total = 0.0;
  for (const auto& t : out) total += t.probability;
  for (auto& t : out) t.probability /= total;

  for (auto& t : out) {
    for (auto& s : t.steps) s = denormalize_step(s, scene.frame);
  }
  return out;
}

GaussianTrajectory predict_for_lane(const Scene& scene, const ParamStore& params,
                                    const ModelConfig& cfg, int lane_index) {
  if (lane_index < 0 || lane_index >= static_cast<int>(scene.candidate_lanes.size())) {
    throw UsageError("predict_for_lane: lane index out of range");
  }
  Tape tape;
  BoundParams p = bind_params(tape, params, cfg);
  ForwardPass fwd = forward_scene(tape, p, scene);
  Var lane_feat = cfg.use_lanes ? fwd.lane_features[static_cast<size_t>(lane_index)]
                                : tape.constant(Tensor({cfg.lane_feature}));
  auto decoded =
      decode(tape, p, fwd.target_feature, fwd.interaction_feature, lane_feat, cfg.horizon);
  GaussianTrajectory traj;
  traj.steps = extract_steps(decoded);
  traj.source_lane = lane_index;
  traj.lane_id = scene.lane_ids[static_cast<size_t>(lane_index)];
  traj.probability =
      cfg.use_lanes
          ? fwd.attention.full_probabilities(
                static_cast<int>(scene.candidate_lanes.size()))[static_cast<size_t>(lane_index)]
          : 1.0;
  for (auto& s : traj.steps) s = denormalize_step(s, scene.frame);
  return traj;
}

}  // namespace laneattn::net
