// End-to-end acceptance checks. Each numbered check prints exactly one
// PASS/FAIL line; the process exits non-zero if any check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "laneattn/dataset.hpp"
#include "laneattn/metrics.hpp"
#include "laneattn/model.hpp"
#include "laneattn/rng.hpp"
#include "laneattn/training.hpp"

using namespace laneattn;
using data::Scene;
using diff::Tape;
using diff::Var;
using geo::Vec2;
using net::ModelConfig;
using net::ParamStore;

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool ok, double seconds,
            const std::string& detail = "") {
  std::printf("%s %2d. %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", number, name.c_str(), seconds,
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

using Builder = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

double eval_builder(const Builder& build, const std::map<std::string, Tensor>& inputs) {
  Tape tape;
  std::map<std::string, Var> bound;
  for (const auto& [name, t] : inputs) bound.emplace(name, tape.param(name, t));
  return build(tape, bound).value()[0];
}

/// Max relative error between reverse-mode and central finite-difference
/// gradients over every element of every input.
double max_grad_error(const Builder& build, std::map<std::string, Tensor> inputs,
                      double eps = 1e-5) {
  Tape tape;
  std::map<std::string, Var> bound;
  for (const auto& [name, t] : inputs) bound.emplace(name, tape.param(name, t));
  Var loss = build(tape, bound);
  tape.backward(loss);
  double worst = 0.0;
  for (auto& [name, t] : inputs) {
    const Tensor g = tape.grad_of(name);
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = eval_builder(build, inputs);
      t[i] = orig - eps;
      const double fm = eval_builder(build, inputs);
      t[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(g[i])});
      worst = std::max(worst, std::fabs(g[i] - fd) / denom);
    }
  }
  return worst;
}

std::vector<Scene> mixed_scenes(int n_keep, int n_turn, int n_fork, uint64_t seed) {
  data::GenConfig cfg;
  cfg.counts = {{"keep_lane", n_keep}, {"turn_left", n_turn}, {"fork_branch", n_fork}};
  return data::generate_synthetic(cfg, seed).scenes;
}

int argmax_lane(const Scene& scene, const ParamStore& params, const ModelConfig& cfg) {
  Tape tape;
  auto bound = net::bind_params(tape, params, cfg);
  auto fwd = net::forward_scene(tape, bound, scene);
  const auto probs = fwd.attention.full_probabilities(
      static_cast<int>(scene.candidate_lanes.size()));
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---- 1. gradient correctness -------------------------------------------

void check_gradient_correctness() {
  Timer timer;
  Rng rng(101);
  double worst_primitive = 0.0;

  const std::vector<std::pair<Builder, std::function<std::map<std::string, Tensor>(Rng&)>>> ops = {
      {[](Tape&, const auto& v) { return diff::sum(diff::matmul(v.at("a"), v.at("b"))); },
       [](Rng& r) {
         return std::map<std::string, Tensor>{{"a", random_tensor({3, 4}, r)},
                                              {"b", random_tensor({4, 2}, r)}};
       }},
      {[](Tape&, const auto& v) { return diff::sum(diff::matvec(v.at("a"), v.at("x"))); },
       [](Rng& r) {
         return std::map<std::string, Tensor>{{"a", random_tensor({4, 3}, r)},
                                              {"x", random_tensor({3}, r)}};
       }},
      {[](Tape&, const auto& v) {
         Var s = diff::sub(diff::add(v.at("a"), v.at("b")), v.at("c"));
         Var m = diff::div(diff::mul(s, v.at("a")), v.at("d"));
         return diff::sum(diff::mul_scalar(diff::add_scalar(m, 0.3), 1.7));
       },
       [](Rng& r) {
         Tensor d = random_tensor({5}, r);
         for (int64_t i = 0; i < d.numel(); ++i) d[i] = 1.0 + std::fabs(d[i]);
         return std::map<std::string, Tensor>{{"a", random_tensor({5}, r)},
                                              {"b", random_tensor({5}, r)},
                                              {"c", random_tensor({5}, r)},
                                              {"d", d}};
       }},
      {[](Tape&, const auto& v) {
         Var t = diff::tanh(v.at("x"));
         Var s = diff::sigmoid(v.at("x"));
         Var e = diff::exp(v.at("x"));
         Var l = diff::log(diff::add_scalar(diff::mul(v.at("x"), v.at("x")), 1.0));
         Var c = diff::clamp(v.at("x"), -0.4, 0.4);
         return diff::sum(diff::add(diff::add(t, s), diff::add(e, diff::add(l, c))));
       },
       [](Rng& r) { return std::map<std::string, Tensor>{{"x", random_tensor({6}, r)}}; }},
      {[](Tape&, const auto& v) {
         Var sc = diff::smul(diff::slice(v.at("a"), 0, 1), v.at("b"));
         return diff::dot(diff::concat({sc, diff::slice(v.at("a"), 1, 2)}),
                          diff::concat({v.at("b"), diff::slice(v.at("a"), 0, 2)}));
       },
       [](Rng& r) {
         return std::map<std::string, Tensor>{{"a", random_tensor({3}, r)},
                                              {"b", random_tensor({4}, r)}};
       }},
      {[](Tape&, const auto& v) { return diff::dot(diff::softmax(v.at("x")), v.at("w")); },
       [](Rng& r) {
         return std::map<std::string, Tensor>{{"x", random_tensor({5}, r, 3.0)},
                                              {"w", random_tensor({5}, r)}};
       }},
      {[](Tape&, const auto& v) {
         return diff::sum(diff::add(diff::max_pool_rows(v.at("m")),
                                    diff::mean_pool_rows(v.at("m"))));
       },
       [](Rng& r) { return std::map<std::string, Tensor>{{"m", random_tensor({3, 6}, r)}}; }},
      {[](Tape&, const auto& v) {
         return diff::sum(diff::tanh(diff::conv1d(v.at("in"), v.at("k"), v.at("b"))));
       },
       [](Rng& r) {
         return std::map<std::string, Tensor>{{"in", random_tensor({2, 8}, r)},
                                              {"k", random_tensor({3, 2, 1}, r)},
                                              {"b", random_tensor({3}, r)}};
       }},
      {[](Tape&, const auto& v) {
         auto [h1, c1] = diff::lstm_step(v.at("x"), v.at("h"), v.at("c"), v.at("wx"), v.at("wh"),
                                         v.at("b"));
         return diff::add(diff::sum(h1), diff::sum(c1));
       },
       [](Rng& r) {
         return std::map<std::string, Tensor>{
             {"wx", random_tensor({12, 2}, r)}, {"wh", random_tensor({12, 3}, r)},
             {"b", random_tensor({12}, r)},     {"x", random_tensor({2}, r)},
             {"h", random_tensor({3}, r)},      {"c", random_tensor({3}, r)}};
       }},
  };
  for (const auto& [build, make] : ops) {
    for (int trial = 0; trial < 3; ++trial) {
      worst_primitive = std::max(worst_primitive, max_grad_error(build, make(rng)));
    }
  }

  // Full training-loss graph on 5 synthetic scenes, reduced model sizes.
  const ModelConfig cfg = ModelConfig::tiny();
  ParamStore params = net::init_params(cfg, 7);
  const auto scenes = mixed_scenes(2, 1, 2, 55);
  double worst_full = 0.0;
  for (int s = 0; s < 5; ++s) {
    const Scene& scene = scenes[static_cast<size_t>(s)];
    auto loss_value = [&](const ParamStore& p) {
      Tape tape;
      auto bound = net::bind_params(tape, p, cfg);
      return train::total_loss(tape, bound, scene, 0.8).total.value()[0];
    };
    Tape tape;
    auto bound = net::bind_params(tape, params, cfg);
    auto loss = train::total_loss(tape, bound, scene, 0.8);
    tape.backward(loss.total);
    const auto grads = tape.gradients();
    ParamStore probe = params;
    const double eps = 1e-5;
    for (auto& [name, t] : probe) {
      const Tensor& g = grads.at(name);
      for (int64_t i = 0; i < t.numel(); ++i) {
        const double orig = t[i];
        t[i] = orig + eps;
        const double fp = loss_value(probe);
        t[i] = orig - eps;
        const double fm = loss_value(probe);
        t[i] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        const double denom = std::max({1.0, std::fabs(fd), std::fabs(g[i])});
        worst_full = std::max(worst_full, std::fabs(g[i] - fd) / denom);
      }
    }
  }

  char detail[128];
  std::snprintf(detail, sizeof(detail), "primitives max rel err %.2e, full graph %.2e",
                worst_primitive, worst_full);
  report(1, "gradient correctness vs finite differences",
         worst_primitive < 1e-4 && worst_full < 1e-3, timer.seconds(), detail);
}

// ---- 2. distribution invariants ----------------------------------------

void check_distribution_invariants() {
  Timer timer;
  Rng rng(202);
  bool ok = true;
  auto check_dist = [&](const std::vector<double>& p, const std::vector<uint8_t>* mask = nullptr) {
    double total = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] < 0.0) ok = false;
      if (mask && !(*mask)[i] && p[i] != 0.0) ok = false;
      total += p[i];
    }
    if (std::fabs(total - 1.0) > 1e-9) ok = false;
  };

  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    Tape tape;
    Var s = diff::softmax(tape.constant(random_tensor({n}, rng, 20.0)));
    std::vector<double> p(s.value().data());
    check_dist(p);
    check_dist(train::smoothed_lane_target(n, static_cast<int>(rng.below(n)),
                                           rng.uniform(1e-3, 1.0)));
  }

  const ModelConfig cfg = ModelConfig::tiny();
  ParamStore params = net::init_params(cfg, 9);
  for (int trial = 0; trial < 1000; ++trial) {
    Tape tape;
    auto bound = net::bind_params(tape, params, cfg);
    const int n = 2 + static_cast<int>(rng.below(5));
    Var target = tape.constant(random_tensor({cfg.motion_feature()}, rng));
    std::vector<Var> lanes;
    std::vector<uint8_t> mask;
    int unmasked = 0;
    for (int i = 0; i < n; ++i) {
      lanes.push_back(tape.constant(random_tensor({cfg.lane_feature}, rng)));
      mask.push_back(rng.below(3) > 0 ? 1 : 0);
      unmasked += mask.back();
    }
    if (unmasked == 0) mask[0] = 1;
    auto att = net::lane_attention(tape, bound, target, lanes, mask);
    check_dist(att.full_probabilities(n), &mask);

    // Interaction weights read out through basis-vector features: the output
    // coordinates are exactly the attention weights.
    std::vector<Var> others;
    const int m = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < m; ++i) {
      Tensor basis({cfg.motion_feature()});
      basis[i] = 1.0;
      others.push_back(tape.constant(std::move(basis)));
    }
    Var f_act = net::interaction(tape, bound, target, others,
                                 std::vector<uint8_t>(static_cast<size_t>(m), 1));
    std::vector<double> w;
    for (int i = 0; i < m; ++i) w.push_back(f_act.value()[i]);
    check_dist(w);
  }

  const auto scenes = mixed_scenes(4, 3, 3, 77);
  for (int trial = 0; trial < 1000; ++trial) {
    const Scene& scene = scenes[trial % scenes.size()];
    const int k = 1 + static_cast<int>(rng.below(8));
    const auto preds = net::predict_multimodal(scene, params, cfg, k, rng.next_u64());
    std::vector<double> p;
    for (const auto& t : preds) p.push_back(t.probability);
    check_dist(p);
  }

  report(2, "probability distributions sum to 1 with exact-zero masking", ok, timer.seconds());
}

// ---- 3. analytic values ------------------------------------------------

void check_analytic_values() {
  Timer timer;
  bool ok = true;
  const double ln2pi = std::log(2.0 * M_PI);
  const std::vector<net::GaussianStep> unit = {{0, 0, 1, 1, 0}};
  if (std::fabs(train::position_nll_value(unit, {{0, 0}}) - ln2pi) > 1e-9) ok = false;

  const auto targets = train::smoothed_lane_target(5, 0, 0.8);
  if (std::fabs(train::lane_loss_value(std::vector<double>(5, 0.2), targets) -
                std::log(5.0) / 5.0) > 1e-9) {
    ok = false;
  }

  const std::vector<net::GaussianStep> endpoint = {{3, 4, 1, 1, 0}};
  if (metrics::fde(endpoint, {{0, 0}}) != 5.0) ok = false;

  report(3, "analytic loss and metric values", ok, timer.seconds());
}

// ---- 4. metric oracles -------------------------------------------------

void check_metric_oracles() {
  Timer timer;
  Rng rng(404);
  bool ok = true;

  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(30));
    std::vector<net::GaussianStep> pred;
    std::vector<Vec2> gt;
    for (int i = 0; i < n; ++i) {
      pred.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), 1, 1, 0});
      gt.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += std::hypot(pred[static_cast<size_t>(i)].mu_x - gt[static_cast<size_t>(i)].x,
                        pred[static_cast<size_t>(i)].mu_y - gt[static_cast<size_t>(i)].y);
    }
    if (std::fabs(metrics::ade(pred, gt) - acc / n) > 1e-12) ok = false;
    if (std::fabs(metrics::fde(pred, gt) -
                  std::hypot(pred.back().mu_x - gt.back().x, pred.back().mu_y - gt.back().y)) >
        1e-12) {
      ok = false;
    }
    // Miss rule consistency with the same displacement values.
    if (metrics::is_miss(metrics::fde(pred, gt)) != (metrics::fde(pred, gt) > 2.0)) ok = false;
  }

  // Drivable-area compliance vs a fresh ray-casting scan.
  geo::LaneGraph graph;
  graph.drivable_area.push_back({{0, 0}, {30, 0}, {35, 20}, {12, 28}, {-6, 14}});
  auto oracle_inside = [&](const Vec2& p) {
    bool inside = false;
    const auto& poly = graph.drivable_area[0];
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      if ((poly[i].y > p.y) != (poly[j].y > p.y)) {
        const double x_cross =
            poly[i].x + (p.y - poly[i].y) / (poly[j].y - poly[i].y) * (poly[j].x - poly[i].x);
        if (p.x < x_cross) inside = !inside;
      }
    }
    return inside;
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<net::GaussianStep> pred;
    bool all_inside = true;
    for (int i = 0; i < 10; ++i) {
      const Vec2 p{rng.uniform(-10, 45) + 0.0107, rng.uniform(-10, 35) + 0.0123};
      pred.push_back({p.x, p.y, 1, 1, 0});
      all_inside = all_inside && oracle_inside(p);
    }
    if (metrics::inside_drivable_area(pred, graph) != all_inside) ok = false;
  }

  // minFDE non-increasing in K on model-evaluated scenes.
  const ModelConfig cfg = ModelConfig::tiny();
  ParamStore params = net::init_params(cfg, 11);
  for (const auto& scene : mixed_scenes(3, 2, 2, 88)) {
    const auto preds = net::predict_multimodal(scene, params, cfg, 6, 5);
    const auto gt = scene.future_positions_city();
    double prev = 1e300;
    for (int k = 1; k <= 6; ++k) {
      const double f = metrics::min_k(preds, gt, k).min_fde;
      if (f > prev + 1e-12) ok = false;
      prev = f;
    }
  }

  report(4, "metrics match brute-force oracles; minFDE monotone in K", ok, timer.seconds());
}

// ---- 5. overfit sanity -------------------------------------------------

void check_overfit() {
  Timer timer;
  const auto scenes = mixed_scenes(4, 2, 2, 500);
  const ModelConfig cfg = ModelConfig::compact();
  train::TrainConfig tcfg;
  tcfg.batch_size = 8;
  tcfg.epochs_phase1 = 250;
  tcfg.epochs_phase2 = 50;
  tcfg.seed = 3;
  const auto result = train::train(scenes, {}, cfg, tcfg);

  const double first = result.history.front().train_total;
  const double last = result.history.back().train_total;
  const double drop = (first - last) / std::fabs(first);

  int correct = 0;
  for (const auto& scene : scenes) {
    if (argmax_lane(scene, result.params, cfg) == scene.gt_lane) ++correct;
  }

  char detail[128];
  std::snprintf(detail, sizeof(detail), "loss %.1f -> %.1f (%.0f%% drop), lane acc %d/%d", first,
                last, 100.0 * drop, correct, static_cast<int>(scenes.size()));
  report(5, "overfitting 8 scenes for 300 epochs",
         drop >= 0.9 && correct == static_cast<int>(scenes.size()), timer.seconds(), detail);
}

// ---- 6-8. trained-model behavior on the small preset -------------------

struct TrainedModels {
  std::vector<Scene> train_set, val_set;
  geo::LaneGraph graph;
  ParamStore full, lstm_only;
  ModelConfig full_cfg = ModelConfig::compact();
  ModelConfig lstm_cfg = ModelConfig::compact();
};

TrainedModels train_small_models() {
  TrainedModels tm;
  auto ds = data::generate_synthetic(data::GenConfig::preset("small"), 1);
  tm.graph = ds.graph;
  auto [train_set, val_set] = data::split(std::move(ds.scenes), 0.8, 0.2, 1);
  tm.train_set = std::move(train_set);
  tm.val_set = std::move(val_set);

  train::TrainConfig tcfg;
  tcfg.seed = 1;
  tm.full = train::train(tm.train_set, tm.val_set, tm.full_cfg, tcfg).best_params;

  tm.lstm_cfg.use_lanes = false;
  tm.lstm_cfg.use_interaction = false;
  tm.lstm_only = train::train(tm.train_set, tm.val_set, tm.lstm_cfg, tcfg).best_params;
  return tm;
}

void check_lane_intention(const TrainedModels& tm) {
  Timer timer;
  int total = 0, correct = 0;
  for (const auto& scene : tm.val_set) {
    if (scene.behavior != "turn_left" && scene.behavior != "turn_right" &&
        scene.behavior != "fork_branch") {
      continue;
    }
    ++total;
    if (argmax_lane(scene, tm.full, tm.full_cfg) == scene.gt_lane) ++correct;
  }
  const double acc = total ? static_cast<double>(correct) / total : 0.0;
  char detail[96];
  std::snprintf(detail, sizeof(detail), "%d/%d held-out fork/turn scenes (%.1f%%)", correct,
                total, 100.0 * acc);
  report(6, "lane-intention accuracy >= 90% on held-out forks and turns", total > 0 && acc >= 0.9,
         timer.seconds(), detail);
}

void check_table_ordering(const TrainedModels& tm) {
  Timer timer;
  const auto full_report =
      metrics::evaluate_model(tm.val_set, tm.graph, tm.full, tm.full_cfg, {1, 3, 6}, 1);
  const auto lstm_report =
      metrics::evaluate_model(tm.val_set, tm.graph, tm.lstm_only, tm.lstm_cfg, {1}, 1);

  const double full_ade = full_report.full.at(1).min_ade;
  const double lstm_ade = lstm_report.full.at(1).min_ade;
  const bool a = full_ade <= lstm_ade;

  const double gain_full = lstm_report.full.at(1).min_ade - full_report.full.at(1).min_ade;
  const double gain_ns = lstm_report.ns.at(1).min_ade - full_report.ns.at(1).min_ade;
  const bool b = gain_ns > gain_full;

  const double fde1 = full_report.full.at(1).min_fde;
  const double fde3 = full_report.full.at(3).min_fde;
  const double fde6 = full_report.full.at(6).min_fde;
  const bool c = fde3 <= fde1 && fde6 <= fde3;

  char detail[192];
  std::snprintf(detail, sizeof(detail),
                "ADE full %.2f vs LSTM %.2f; NS gain %.2f vs %.2f; minFDE %.2f/%.2f/%.2f", full_ade,
                lstm_ade, gain_ns, gain_full, fde1, fde3, fde6);
  report(7, "directional ordering of ablations and K columns", a && b && c, timer.seconds(),
         detail);
}

void check_fork_divergence(const TrainedModels& tm) {
  Timer timer;
  int forks = 0;
  double min_div = 1e300;
  bool ok = true;
  auto scan = [&](const std::vector<Scene>& scenes) {
    for (const auto& scene : scenes) {
      if (scene.behavior != "fork_branch") continue;
      int up = -1, dn = -1;
      for (size_t i = 0; i < scene.lane_ids.size(); ++i) {
        if (scene.lane_ids[i] == "fk_up") up = static_cast<int>(i);
        if (scene.lane_ids[i] == "fk_dn") dn = static_cast<int>(i);
      }
      if (up < 0 || dn < 0) continue;
      ++forks;
      const auto a = net::predict_for_lane(scene, tm.full, tm.full_cfg, up);
      const auto b = net::predict_for_lane(scene, tm.full, tm.full_cfg, dn);
      const double div = std::hypot(a.steps.back().mu_x - b.steps.back().mu_x,
                                    a.steps.back().mu_y - b.steps.back().mu_y);
      min_div = std::min(min_div, div);
      if (div < 2.0) ok = false;
    }
  };
  scan(tm.val_set);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "%d fork scenes, min branch divergence %.2f m", forks,
                min_div);
  report(8, "branch-conditioned hypotheses diverge by >= 2 m FDE", ok && forks > 0,
         timer.seconds(), detail);
}

// ---- 9. rigid-motion equivariance --------------------------------------

void check_equivariance() {
  Timer timer;
  data::GenConfig gcfg;
  gcfg.counts = {{"keep_lane", 8}, {"lane_change_left", 3}, {"turn_left", 3}, {"turn_right", 3},
                 {"fork_branch", 3}};
  const auto ds = data::generate_synthetic(gcfg, 900);
  const ModelConfig cfg = ModelConfig::compact();
  const ParamStore params = net::init_params(cfg, 13);

  Rng rng(909);
  double worst = 0.0;
  for (size_t i = 0; i < ds.raw.size(); ++i) {
    const double a = rng.uniform(-M_PI, M_PI);
    const Vec2 t{rng.uniform(-500, 500), rng.uniform(-500, 500)};
    auto move = [&](const Vec2& p) {
      return Vec2{p.x * std::cos(a) - p.y * std::sin(a) + t.x,
                  p.x * std::sin(a) + p.y * std::cos(a) + t.y};
    };

    data::RawScene raw = ds.raw[i];
    for (auto& p : raw.target.positions) p = move(p);
    for (auto& other : raw.others)
      for (auto& p : other.positions) p = move(p);
    geo::LaneGraph graph = ds.graph;
    for (auto& [id, lane] : graph.lanes)
      for (auto& p : lane.centerline) p = move(p);
    for (auto& poly : graph.drivable_area)
      for (auto& p : poly) p = move(p);

    const Scene base = ds.scenes[i];
    const Scene moved = data::build_scene(raw, graph, gcfg.data);
    const auto pred_base = net::predict_multimodal(base, params, cfg, 3, 17);
    const auto pred_moved = net::predict_multimodal(moved, params, cfg, 3, 17);
    for (size_t h = 0; h < pred_base.size(); ++h) {
      for (size_t s = 0; s < pred_base[h].steps.size(); ++s) {
        const Vec2 expected = move({pred_base[h].steps[s].mu_x, pred_base[h].steps[s].mu_y});
        worst = std::max(worst, std::hypot(pred_moved[h].steps[s].mu_x - expected.x,
                                           pred_moved[h].steps[s].mu_y - expected.y));
      }
    }
  }
  char detail[64];
  std::snprintf(detail, sizeof(detail), "max deviation %.2e m over 20 scenes", worst);
  report(9, "predictions commute with rigid scene motions", worst < 1e-6, timer.seconds(), detail);
}

// ---- 10. end-to-end determinism ----------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_determinism() {
  Timer timer;
  bool ok = true;
  const fs::path root = fs::temp_directory_path() / "laneattn_acceptance_det";
  fs::remove_all(root);

  auto run = [&](const fs::path& dir) {
    const data::GenConfig gcfg = data::GenConfig::preset("tiny");
    const auto ds = data::generate_synthetic(gcfg, 21);
    data::write_dataset(ds, dir / "data", gcfg, 21);

    auto scenes = data::load_dataset(dir / "data" / "scenes", dir / "data" / "map.json",
                                     gcfg.data);
    auto [train_set, val_set] = data::split(std::move(scenes), 0.8, 0.2, 21);
    train::TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs_phase1 = 2;
    tcfg.epochs_phase2 = 1;
    tcfg.seed = 21;
    const auto result =
        train::train(train_set, val_set, ModelConfig::tiny(), tcfg, dir / "run");

    const auto graph = data::load_map(dir / "data" / "map.json");
    const auto report = metrics::evaluate_model(val_set, graph, result.best_params,
                                                ModelConfig::tiny(), {1, 3, 6}, 21);
    std::ofstream(dir / "report.json") << report.to_json() << "\n";
  };
  run(root / "a");
  run(root / "b");

  // Every produced file must be byte-identical across the two runs.
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root / "a"));
  }
  std::sort(rel.begin(), rel.end());
  if (rel.empty()) ok = false;
  for (const auto& r : rel) {
    if (!fs::exists(root / "b" / r) || file_bytes(root / "a" / r) != file_bytes(root / "b" / r)) {
      ok = false;
    }
  }
  char detail[64];
  std::snprintf(detail, sizeof(detail), "%zu files compared", rel.size());
  report(10, "generate -> train -> eval is byte-identical across runs", ok, timer.seconds(),
         detail);
}

}  // namespace

int main() {
  check_gradient_correctness();
  check_distribution_invariants();
  check_analytic_values();
  check_metric_oracles();
  check_overfit();
  const TrainedModels tm = train_small_models();
  check_lane_intention(tm);
  check_table_ordering(tm);
  check_fork_divergence(tm);
  check_equivariance();
  check_determinism();
  if (g_failures) std::printf("%d acceptance check(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
