#include <algorithm>
#include <cmath>

#include "laneattn/dataset.hpp"
#include "laneattn/rng.hpp"

namespace laneattn::data {

using geo::Lane;
using geo::LaneGraph;
using geo::Vec2;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLaneWidth = 3.5;
constexpr double kCorridorWidth = 4.0;

std::vector<Vec2> line_points(Vec2 a, Vec2 b, double spacing) {
  const double len = (b - a).norm();
  const int n = std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1);
  std::vector<Vec2> pts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pts[static_cast<size_t>(i)] = a + (b - a) * (double(i) / (n - 1));
  return pts;
}

std::vector<Vec2> arc_points(Vec2 center, double radius, double a0, double a1, double spacing) {
  const double len = radius * std::fabs(a1 - a0);
  const int n = std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1);
  std::vector<Vec2> pts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = a0 + (a1 - a0) * double(i) / (n - 1);
    pts[static_cast<size_t>(i)] = center + Vec2{std::cos(a), std::sin(a)} * radius;
  }
  return pts;
}

geo::Polygon corridor(const std::vector<Vec2>& center, double width) {
  const double h = width / 2.0;
  std::vector<Vec2> left, right;
  for (size_t i = 0; i < center.size(); ++i) {
    Vec2 dir{0.0, 0.0};
    if (i > 0) dir = dir + (center[i] - center[i - 1]);
    if (i + 1 < center.size()) dir = dir + (center[i + 1] - center[i]);
    const double n = dir.norm();
    if (n < 1e-12) continue;
    const Vec2 normal{-dir.y / n, dir.x / n};
    left.push_back(center[i] + normal * h);
    right.push_back(center[i] - normal * h);
  }
  geo::Polygon poly = left;
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return poly;
}

struct Templates {
  LaneGraph graph;
  std::vector<std::string> straight{"st_0", "st_1", "st_2"};
  std::vector<std::string> curve{"cv_0", "cv_1", "cv_2"};
  // Lanes long enough to host other agents, per template.
  std::map<std::string, std::vector<std::string>> others = {
      {"straight", {"st_0", "st_1", "st_2"}},
      {"curve", {"cv_0", "cv_1", "cv_2"}},
      {"intersection", {"ix_stem", "ix_through", "ix_west", "ix_east"}},
      {"fork", {"fk_stem"}},
  };
};

void add_lane(LaneGraph& g, const std::string& id, std::vector<Vec2> pts,
              std::vector<std::string> successors = {}, bool is_intersection = false) {
  Lane lane;
  lane.id = id;
  lane.centerline = std::move(pts);
  lane.successors = std::move(successors);
  lane.is_intersection = is_intersection;
  g.drivable_area.push_back(corridor(lane.centerline, kCorridorWidth));
  g.lanes.emplace(id, std::move(lane));
}

std::vector<Vec2> fork_branch(Vec2 tip, double sign) {
  // 35-degree divergence: radius-25 arc then a straight run. The radius is
  // kept tight so a branch choice shows up in the observed window.
  const double r = 25.0;
  const double ang = 35.0 * kPi / 180.0;
  const Vec2 center = tip + Vec2{0.0, sign * r};
  std::vector<Vec2> pts = arc_points(center, r, -sign * kPi / 2.0,
                                     -sign * kPi / 2.0 + sign * ang, 2.0);
  const Vec2 dir{std::cos(sign * ang), std::sin(sign * ang)};
  const Vec2 end = pts.back();
  auto tail = line_points(end + dir * 2.0, end + dir * 122.0, 5.0);
  pts.insert(pts.end(), tail.begin(), tail.end());
  return pts;
}

Templates build_templates() {
  Templates t;
  LaneGraph& g = t.graph;
  // Straight 3-lane road at the origin.
  for (int i = 0; i < 3; ++i) {
    const double y = kLaneWidth * i;
    add_lane(g, "st_" + std::to_string(i), line_points({0.0, y}, {400.0, y}, 10.0));
  }
  // Gentle curve (radius 400) near (0, 2000).
  for (int i = 0; i < 3; ++i) {
    const double r = 400.0 + kLaneWidth * i;
    add_lane(g, "cv_" + std::to_string(i), arc_points({0.0, 2000.0}, r, -0.5, 0.5, 8.0));
  }
  // 90-degree intersection near (2000, 0); stem runs northbound.
  add_lane(g, "ix_stem", line_points({2000.0, -150.0}, {2000.0, -8.0}, 10.0),
           {"ix_left_arc", "ix_right_arc", "ix_through"});
  add_lane(g, "ix_through", line_points({2000.0, -8.0}, {2000.0, 150.0}, 10.0));
  add_lane(g, "ix_left_arc", arc_points({1992.0, -8.0}, 8.0, 0.0, kPi / 2.0, 2.0), {"ix_west"},
           true);
  add_lane(g, "ix_west", line_points({1992.0, 0.0}, {1850.0, 0.0}, 10.0));
  add_lane(g, "ix_right_arc", arc_points({2008.0, -8.0}, 8.0, kPi, kPi / 2.0, 2.0), {"ix_east"},
           true);
  add_lane(g, "ix_east", line_points({2008.0, 0.0}, {2150.0, 0.0}, 10.0));
  // Y-fork near (2000, 2000); stem runs east.
  add_lane(g, "fk_stem", line_points({1850.0, 2000.0}, {2008.0, 2000.0}, 10.0),
           {"fk_up", "fk_dn"});
  add_lane(g, "fk_up", fork_branch({2008.0, 2000.0}, +1.0));
  add_lane(g, "fk_dn", fork_branch({2008.0, 2000.0}, -1.0));
  // Reciprocal predecessor links.
  for (auto& [id, lane] : g.lanes) {
    for (const auto& s : lane.successors) g.lanes.at(s).predecessors.push_back(id);
  }
  return t;
}

/// Route reference path densely resampled, with lane ownership per arclength.
struct RoutePath {
  std::vector<Vec2> pts;       // ~0.25 m spacing
  std::vector<double> cum;     // arclength at each point
  std::vector<double> lane_end;  // cumulative arclength where each route lane ends
  std::vector<std::string> lane_ids;

  double length() const { return cum.back(); }

  Vec2 at(double s) const {
    s = std::clamp(s, 0.0, cum.back());
    const auto it = std::lower_bound(cum.begin(), cum.end(), s);
    size_t i = static_cast<size_t>(it - cum.begin());
    if (i == 0) return pts[0];
    const double seg = cum[i] - cum[i - 1];
    const double t = seg > 0 ? (s - cum[i - 1]) / seg : 0.0;
    return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
  }

  double heading_at(double s) const {
    const Vec2 a = at(std::max(0.0, s - 0.5));
    const Vec2 b = at(std::min(cum.back(), s + 0.5));
    return std::atan2(b.y - a.y, b.x - a.x);
  }

  std::string lane_at(double s) const {
    for (size_t i = 0; i < lane_end.size(); ++i) {
      if (s <= lane_end[i]) return lane_ids[i];
    }
    return lane_ids.back();
  }
};

std::vector<double> cumulative(const std::vector<Vec2>& pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

RoutePath route_from_lanes(const LaneGraph& g, const std::vector<std::string>& ids) {
  std::vector<Vec2> waypoints;
  std::vector<double> lane_end;
  for (const auto& id : ids) {
    const auto& cl = g.lanes.at(id).centerline;
    for (const auto& p : cl) {
      if (!waypoints.empty() && (p - waypoints.back()).norm() < 1e-9) continue;
      waypoints.push_back(p);
    }
    lane_end.push_back(geo::polyline_length(waypoints));
  }
  RoutePath rp;
  const int n = std::max(2, static_cast<int>(geo::polyline_length(waypoints) / 0.25));
  rp.pts = geo::resample_polyline(waypoints, n);
  rp.cum = cumulative(rp.pts);
  rp.lane_ids = ids;
  rp.lane_end = lane_end;
  // Resampling perturbs arclength slightly; rescale lane boundaries to match.
  const double scale = rp.cum.back() / lane_end.back();
  for (auto& s : rp.lane_end) s *= scale;
  return rp;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

RoutePath lane_change_route(const LaneGraph& g, const std::string& src_id,
                            const std::string& tgt_id, double s_on, double change_len) {
  const auto& src = g.lanes.at(src_id).centerline;
  const auto& tgt = g.lanes.at(tgt_id).centerline;
  const int n = std::max(2, static_cast<int>(geo::polyline_length(src) / 0.25));
  const auto src_d = geo::resample_polyline(src, n);
  const auto tgt_d = geo::resample_polyline(tgt, n);
  const auto cum = cumulative(src_d);
  RoutePath rp;
  rp.pts.reserve(src_d.size());
  for (size_t i = 0; i < src_d.size(); ++i) {
    const double w = smoothstep((cum[i] - s_on) / change_len);
    rp.pts.push_back(src_d[i] * (1.0 - w) + tgt_d[i] * w);
  }
  rp.cum = cumulative(rp.pts);
  rp.lane_ids = {tgt_id};
  rp.lane_end = {rp.cum.back()};
  return rp;
}

/// Kinematic pure-pursuit tracking of a reference path at constant speed.
std::vector<Vec2> simulate(const RoutePath& path, double s0, double speed, int samples,
                           double hz) {
  const double dt = 0.02;
  const int per_sample = std::max(1, static_cast<int>(std::llround(1.0 / (hz * dt))));
  Vec2 pos = path.at(s0);
  double heading = path.heading_at(s0);
  double s_ref = s0;
  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(samples));
  out.push_back(pos);
  const double lookahead = std::clamp(0.8 * speed, 2.0, 8.0);
  int step = 0;
  while (static_cast<int>(out.size()) < samples) {
    // Advance the path progress estimate, then steer at the lookahead point.
    while (s_ref + 0.25 < path.length() &&
           (path.at(s_ref + 0.25) - pos).norm() < (path.at(s_ref) - pos).norm()) {
      s_ref += 0.25;
    }
    const Vec2 target = path.at(std::min(path.length(), s_ref + lookahead));
    const double alpha =
        geo::normalize_angle(std::atan2(target.y - pos.y, target.x - pos.x) - heading);
    const double curvature = 2.0 * std::sin(alpha) / lookahead;
    heading += speed * curvature * dt;
    pos = pos + Vec2{std::cos(heading), std::sin(heading)} * (speed * dt);
    if (++step % per_sample == 0) out.push_back(pos);
  }
  return out;
}

struct Scenario {
  RoutePath route;
  double s0 = 0.0;
  double speed = 0.0;
  std::string intended;  // empty: derive from final arclength
  std::string template_name;
};

Scenario make_scenario(const Templates& t, const std::string& behavior, Rng& rng,
                       const GenConfig& cfg) {
  const LaneGraph& g = t.graph;
  Scenario sc;
  sc.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
  const double travel = 5.0 * sc.speed + 12.0;  // margin for the lookahead
  if (behavior == "keep_lane") {
    const bool curved = rng.below(2) == 1;
    sc.template_name = curved ? "curve" : "straight";
    const auto& ids = curved ? t.curve : t.straight;
    const std::string id = ids[rng.below(ids.size())];
    sc.route = route_from_lanes(g, {id});
    sc.s0 = rng.uniform(2.0, std::max(2.5, sc.route.length() - travel));
    sc.intended = id;
  } else if (behavior == "lane_change_left" || behavior == "lane_change_right") {
    sc.template_name = "straight";
    const bool left = behavior == "lane_change_left";
    const int src = left ? static_cast<int>(rng.below(2)) : 1 + static_cast<int>(rng.below(2));
    const int tgt = left ? src + 1 : src - 1;
    const std::string src_id = t.straight[static_cast<size_t>(src)];
    const std::string tgt_id = t.straight[static_cast<size_t>(tgt)];
    const double approx_len = geo::polyline_length(g.lanes.at(src_id).centerline);
    sc.s0 = rng.uniform(2.0, std::max(2.5, approx_len - travel));
    const double t_on = rng.uniform(0.8, 1.6);
    sc.route = lane_change_route(g, src_id, tgt_id, sc.s0 + sc.speed * t_on, 3.0 * sc.speed);
    sc.intended = tgt_id;
  } else if (behavior == "turn_left" || behavior == "turn_right") {
    sc.template_name = "intersection";
    const bool left = behavior == "turn_left";
    std::vector<std::string> ids = {"ix_stem", left ? "ix_left_arc" : "ix_right_arc",
                                    left ? "ix_west" : "ix_east"};
    sc.route = route_from_lanes(g, ids);
    const double s_entry = sc.route.lane_end[0];
    const double t_on = rng.uniform(0.8, 1.6);
    sc.s0 = std::max(2.0, s_entry - sc.speed * t_on);
  } else if (behavior == "fork_branch") {
    sc.template_name = "fork";
    const std::string branch = rng.below(2) == 0 ? "fk_up" : "fk_dn";
    sc.route = route_from_lanes(g, {"fk_stem", branch});
    const double s_fork = sc.route.lane_end[0];
    // Enter the branch early enough that at least a second of the maneuver
    // is observed; otherwise the intended branch is pure chance.
    const double t_on = rng.uniform(0.4, 1.0);
    sc.s0 = std::max(2.0, s_fork - sc.speed * t_on);
  } else {
    throw ConfigError("unknown behavior class: " + behavior);
  }
  return sc;
}

}  // namespace

SyntheticDataset generate_synthetic(const GenConfig& cfg, uint64_t seed) {
  cfg.validate();
  const Templates templates = build_templates();
  const LaneGraph& g = templates.graph;

  std::vector<std::string> behaviors;
  for (const auto& [name, count] : cfg.counts) {
    for (int i = 0; i < count; ++i) behaviors.push_back(name);
  }
  Rng order_rng = Rng(seed).fork("scene-order");
  order_rng.shuffle(behaviors);

  SyntheticDataset ds;
  ds.graph = g;
  const double hz = cfg.data.hz;
  const int samples = cfg.data.total_steps();
  for (size_t i = 0; i < behaviors.size(); ++i) {
    Rng rng = Rng(seed).fork("scene-" + std::to_string(i));
    const Scenario sc = make_scenario(templates, behaviors[i], rng, cfg);
    std::vector<Vec2> clean = simulate(sc.route, sc.s0, sc.speed, samples, hz);

    RawScene raw;
    raw.behavior = behaviors[i];
    raw.source = "synthetic_" + std::to_string(i);
    raw.target.role = Role::kTarget;
    raw.target.observed_len = cfg.data.obs_steps;
    for (int k = 0; k < samples; ++k) {
      raw.target.timestamps.push_back(k / hz);
      raw.target.positions.push_back(clean[static_cast<size_t>(k)] +
                                     Vec2{rng.gaussian(0.0, cfg.noise_sigma),
                                          rng.gaussian(0.0, cfg.noise_sigma)});
    }
    if (!sc.intended.empty()) {
      raw.intended_lane_id = sc.intended;
    } else {
      // Final position decides the intended lane along the route.
      double s_final = sc.s0;
      for (double s = sc.s0; s < sc.route.length(); s += 0.25) {
        if ((sc.route.at(s) - clean.back()).norm() <
            (sc.route.at(s_final) - clean.back()).norm()) {
          s_final = s;
        }
      }
      raw.intended_lane_id = sc.route.lane_at(s_final);
    }

    const auto& host_lanes = templates.others.at(sc.template_name);
    const int n_others = static_cast<int>(rng.below(4));
    for (int k = 0; k < n_others; ++k) {
      const std::string id = host_lanes[rng.below(host_lanes.size())];
      RoutePath rp = route_from_lanes(g, {id});
      const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
      const double room = 5.0 * speed + 12.0;
      if (rp.length() < room + 4.0) continue;
      const double s0 = rng.uniform(2.0, rp.length() - room);
      const auto track = simulate(rp, s0, speed, samples, hz);
      TrajectorySequence other;
      other.role = Role::kOther;
      other.observed_len = cfg.data.obs_steps;
      for (int m = 0; m < samples; ++m) {
        other.timestamps.push_back(m / hz);
        other.positions.push_back(track[static_cast<size_t>(m)] +
                                  Vec2{rng.gaussian(0.0, cfg.noise_sigma),
                                       rng.gaussian(0.0, cfg.noise_sigma)});
      }
      raw.others.push_back(std::move(other));
    }
    ds.scenes.push_back(build_scene(raw, g, cfg.data));
    ds.raw.push_back(std::move(raw));
  }
  return ds;
}

}  // namespace laneattn::data
