#include "laneattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace laneattn::metrics {

using data::Scene;
using geo::Vec2;
using net::GaussianStep;
using net::GaussianTrajectory;
using nlohmann::json;

double ade(const std::vector<GaussianStep>& pred, const std::vector<Vec2>& gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw DimensionError("ade: " + std::to_string(pred.size()) + " predicted steps vs " +
                         std::to_string(gt.size()) + " ground-truth points");
  }
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    acc += std::hypot(pred[i].mu_x - gt[i].x, pred[i].mu_y - gt[i].y);
  }
  return acc / static_cast<double>(pred.size());
}

double fde(const std::vector<GaussianStep>& pred, const std::vector<Vec2>& gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw DimensionError("fde: " + std::to_string(pred.size()) + " predicted steps vs " +
                         std::to_string(gt.size()) + " ground-truth points");
  }
  return std::hypot(pred.back().mu_x - gt.back().x, pred.back().mu_y - gt.back().y);
}

MinK min_k(const std::vector<GaussianTrajectory>& hypotheses, const std::vector<Vec2>& gt,
           int k) {
  if (k < 1) throw UsageError("min_k: k must be >= 1");
  if (hypotheses.empty()) throw UsageError("min_k: no hypotheses");

  std::vector<size_t> order(hypotheses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return hypotheses[a].probability > hypotheses[b].probability;
  });
  const size_t take = std::min<size_t>(static_cast<size_t>(k), order.size());

  MinK out;
  out.min_fde = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < take; ++r) {
    const double f = fde(hypotheses[order[r]].steps, gt);
    if (f < out.min_fde) {
      out.min_fde = f;
      out.best = static_cast<int>(order[r]);
    }
  }
  out.min_ade = ade(hypotheses[static_cast<size_t>(out.best)].steps, gt);
  return out;
}

bool inside_drivable_area(const std::vector<GaussianStep>& pred, const geo::LaneGraph& graph) {
  for (const auto& s : pred) {
    if (!geo::point_in_drivable_area(graph, {s.mu_x, s.mu_y})) return false;
  }
  return true;
}

bool is_miss(double final_error, double threshold) { return final_error > threshold; }

GaussianTrajectory constant_velocity_predict(const Scene& scene, int horizon) {
  const auto& t = scene.target;
  if (t.observed_len < 2) throw UsageError("constant_velocity_predict: too few observed steps");
  const int last = t.observed_len - 1;
  const int n_avg = std::min(5, t.observed_len);
  Vec2 v{0.0, 0.0};
  for (int i = t.observed_len - n_avg; i < t.observed_len; ++i) {
    v = v + t.velocities[static_cast<size_t>(i)];
  }
  v = v * (1.0 / n_avg);
  const double dt = t.timestamps[static_cast<size_t>(last)] -
                    t.timestamps[static_cast<size_t>(last - 1)];

  GaussianTrajectory out;
  out.probability = 1.0;
  out.steps.reserve(static_cast<size_t>(horizon));
  Vec2 p = t.positions[static_cast<size_t>(last)];
  for (int i = 0; i < horizon; ++i) {
    p = p + v * dt;
    const Vec2 city = scene.frame.to_city(p);
    out.steps.push_back({city.x, city.y, 1.0, 1.0, 0.0});
  }
  return out;
}

EvalReport evaluate(const std::vector<Scene>& scenes, const geo::LaneGraph& graph,
                    const Predictor& predict, const std::vector<int>& ks,
                    double miss_threshold) {
  if (scenes.empty()) throw UsageError("evaluate: empty scene list");
  if (ks.empty()) throw UsageError("evaluate: no K values");

  EvalReport report;
  report.ks = ks;
  report.miss_threshold = miss_threshold;
  report.n_scenes = static_cast<int>(scenes.size());

  struct Acc {
    double ade = 0.0, fde = 0.0, dac = 0.0, miss = 0.0;
    int n = 0;
  };
  std::map<int, Acc> full, ns;

  for (const Scene& scene : scenes) {
    const auto gt = scene.future_positions_city();
    if (scene.ns_flag) ++report.n_ns;
    // Hypotheses are requested per K: probabilities (and hence the top-1
    // ranking) depend on how many are asked for once sampling kicks in.
    for (int k : ks) {
      const auto hypotheses = predict(scene, k);
      const MinK m = min_k(hypotheses, gt, k);
      std::vector<size_t> order(hypotheses.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return hypotheses[a].probability > hypotheses[b].probability;
      });
      const size_t take = std::min<size_t>(static_cast<size_t>(k), order.size());
      int n_inside = 0;
      for (size_t r = 0; r < take; ++r) {
        n_inside += inside_drivable_area(hypotheses[order[r]].steps, graph) ? 1 : 0;
      }
      const double dac = static_cast<double>(n_inside) / static_cast<double>(take);
      const double miss = is_miss(m.min_fde, miss_threshold) ? 1.0 : 0.0;

      auto bump = [&](Acc& a) {
        a.ade += m.min_ade;
        a.fde += m.min_fde;
        a.dac += dac;
        a.miss += miss;
        ++a.n;
      };
      bump(full[k]);
      if (scene.ns_flag) bump(ns[k]);
    }
  }

  auto finalize = [](const Acc& a) {
    MetricBlock b;
    if (a.n > 0) {
      b.min_ade = a.ade / a.n;
      b.min_fde = a.fde / a.n;
      b.dac = a.dac / a.n;
      b.miss_rate = a.miss / a.n;
    }
    return b;
  };
  for (int k : ks) {
    report.full[k] = finalize(full[k]);
    report.ns[k] = finalize(ns[k]);
  }
  return report;
}

EvalReport evaluate_model(const std::vector<Scene>& scenes, const geo::LaneGraph& graph,
                          const net::ParamStore& params, const net::ModelConfig& cfg,
                          const std::vector<int>& ks, uint64_t seed, double miss_threshold) {
  return evaluate(
      scenes, graph,
      [&](const Scene& scene, int k) {
        return net::predict_multimodal(scene, params, cfg, k, seed);
      },
      ks, miss_threshold);
}

namespace {

json block_to_json(const MetricBlock& b) {
  return json{{"minADE", b.min_ade},
              {"minFDE", b.min_fde},
              {"DAC", b.dac},
              {"MR", b.miss_rate}};
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["n_scenes"] = n_scenes;
  j["n_ns"] = n_ns;
  j["miss_threshold"] = miss_threshold;
  j["ks"] = ks;
  for (int k : ks) {
    const std::string key = std::to_string(k);
    j["full"][key] = block_to_json(full.at(k));
    j["ns"][key] = block_to_json(ns.at(k));
  }
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "scenes: %d (non-straight: %d), miss threshold: %.1f m\n",
                n_scenes, n_ns, miss_threshold);
  out << line;
  out << "subset  K   minADE    minFDE       DAC        MR\n";
  auto row = [&](const char* name, int k, const MetricBlock& b) {
    std::snprintf(line, sizeof(line), "%-6s %2d  %8.4f  %8.4f  %8.4f  %8.4f\n", name, k,
                  b.min_ade, b.min_fde, b.dac, b.miss_rate);
    out << line;
  };
  for (int k : ks) row("full", k, full.at(k));
  for (int k : ks) row("ns", k, ns.at(k));
  return out.str();
}

}  // namespace laneattn::metrics
