#include "laneattn/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace laneattn::geo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBoundaryEps = 1e-9;

double point_to_segment_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0.0) return (p - a).norm();
  double t = (p - a).dot(ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}
}  // namespace

double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

double polyline_length(const std::vector<Vec2>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

double point_to_polyline_distance(const std::vector<Vec2>& pts, const Vec2& p) {
  if (pts.empty()) throw GeometryError("distance to empty polyline");
  if (pts.size() == 1) return (p - pts[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < pts.size(); ++i) {
    best = std::min(best, point_to_segment_distance(pts[i - 1], pts[i], p));
  }
  return best;
}

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int n_points) {
  if (n_points < 2) throw GeometryError("resample requires n_points >= 2");
  if (pts.size() < 2) throw GeometryError("resample requires >= 2 input points");
  std::vector<double> cum(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = cum.back();
  if (total <= 0.0) throw GeometryError("resample of zero-length polyline");
  std::vector<Vec2> out(static_cast<size_t>(n_points));
  out.front() = pts.front();
  out.back() = pts.back();
  size_t seg = 1;
  for (int i = 1; i + 1 < n_points; ++i) {
    const double s = total * i / (n_points - 1);
    while (seg + 1 < pts.size() && cum[seg] < s) ++seg;
    const double seg_len = cum[seg] - cum[seg - 1];
    const double t = seg_len > 0.0 ? (s - cum[seg - 1]) / seg_len : 0.0;
    out[static_cast<size_t>(i)] = pts[seg - 1] + (pts[seg] - pts[seg - 1]) * t;
  }
  return out;
}

std::vector<Vec2> resample_centerline(const Lane& lane, int n_points) {
  return resample_polyline(lane.centerline, n_points);
}

std::vector<const Lane*> find_candidate_lanes(const LaneGraph& graph, const Vec2& position,
                                              double radius, int max_lanes) {
  if (radius <= 0.0) throw GeometryError("candidate search radius must be positive");
  if (max_lanes < 1) throw GeometryError("max_lanes must be >= 1");
  std::map<std::string, double> selected;  // id -> distance
  for (const auto& [id, lane] : graph.lanes) {
    const double d = point_to_polyline_distance(lane.centerline, position);
    if (d <= radius) selected.emplace(id, d);
  }
  // One hop of successors covers the continuation segment past the search
  // radius.
  std::vector<std::string> in_radius;
  in_radius.reserve(selected.size());
  for (const auto& [id, d] : selected) in_radius.push_back(id);
  for (const auto& id : in_radius) {
    for (const auto& succ : graph.lanes.at(id).successors) {
      auto it = graph.lanes.find(succ);
      if (it == graph.lanes.end() || selected.count(succ)) continue;
      selected.emplace(succ, point_to_polyline_distance(it->second.centerline, position));
    }
  }
  std::vector<std::pair<double, std::string>> order;
  order.reserve(selected.size());
  for (const auto& [id, d] : selected) order.emplace_back(d, id);
  std::sort(order.begin(), order.end());
  std::vector<const Lane*> out;
  for (const auto& [d, id] : order) {
    if (static_cast<int>(out.size()) >= max_lanes) break;
    out.push_back(&graph.lanes.at(id));
  }
  return out;
}

bool point_in_polygon(const Polygon& poly, const Vec2& p) {
  const size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    if (point_to_segment_distance(a, b, p) <= kBoundaryEps) return true;
  }
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xi) inside = !inside;
    }
  }
  return inside;
}

bool point_in_drivable_area(const LaneGraph& graph, const Vec2& p) {
  for (const auto& poly : graph.drivable_area) {
    if (point_in_polygon(poly, p)) return true;
  }
  return false;
}

int lane_ground_truth(const std::vector<std::vector<Vec2>>& lanes,
                      const std::vector<Vec2>& future) {
  if (lanes.empty()) throw DataError("lane_ground_truth: no candidate lanes");
  if (future.empty()) throw DataError("lane_ground_truth: empty future trajectory");
  const size_t m = future.size();
  const size_t tail = std::max<size_t>(1, (m + 2) / 3);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t li = 0; li < lanes.size(); ++li) {
    double acc = 0.0;
    for (size_t i = m - tail; i < m; ++i) {
      acc += point_to_polyline_distance(lanes[li], future[i]);
    }
    const double mean = acc / static_cast<double>(tail);
    if (mean < best_d) {
      best_d = mean;
      best = static_cast<int>(li);
    }
  }
  return best;
}

namespace {
// Direction of travel estimated from up to five displacement steps, to tame
// per-step position noise.
double smoothed_heading(const std::vector<Vec2>& track, size_t begin, size_t end) {
  Vec2 acc{0.0, 0.0};
  for (size_t i = begin + 1; i < end; ++i) acc = acc + (track[i] - track[i - 1]);
  if (acc.norm() < 1e-12) return 0.0;
  return std::atan2(acc.y, acc.x);
}
}  // namespace

bool is_non_straight(const std::vector<Vec2>& track, int observed_len,
                     const std::vector<std::vector<Vec2>>& lanes) {
  if (track.size() < 2) throw DataError("is_non_straight requires >= 2 points");
  const size_t n = track.size();
  const size_t w = std::min<size_t>(6, n);
  const double h0 = smoothed_heading(track, 0, w);
  const double h1 = smoothed_heading(track, n - w, n);
  if (std::fabs(normalize_angle(h1 - h0)) > 30.0 * kPi / 180.0) return true;

  // Lateral deviation from the principal axis through the centroid.
  Vec2 c{0.0, 0.0};
  for (const auto& p : track) c = c + p;
  c = c * (1.0 / static_cast<double>(n));
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : track) {
    const Vec2 d = p - c;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const Vec2 axis{std::cos(theta), std::sin(theta)};
  double max_lat = 0.0;
  for (const auto& p : track) max_lat = std::max(max_lat, std::fabs(axis.cross(p - c)));
  if (max_lat > 2.0) return true;

  if (!lanes.empty() && observed_len >= 1 && static_cast<size_t>(observed_len) < n) {
    const std::vector<Vec2> future(track.begin() + observed_len, track.end());
    const int gt = lane_ground_truth(lanes, future);
    const Vec2& last_obs = track[static_cast<size_t>(observed_len) - 1];
    int closest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t li = 0; li < lanes.size(); ++li) {
      const double d = point_to_polyline_distance(lanes[li], last_obs);
      if (d < best) {
        best = d;
        closest = static_cast<int>(li);
      }
    }
    if (gt != closest) return true;
  }
  return false;
}

Frame::Frame(const Pose2& anchor) : anchor_(anchor) {
  cos_ = std::cos(anchor.heading);
  sin_ = std::sin(anchor.heading);
}

Vec2 Frame::to_local(const Vec2& city) const {
  const Vec2 d = city - anchor_.position;
  return {cos_ * d.x + sin_ * d.y, -sin_ * d.x + cos_ * d.y};
}

Vec2 Frame::to_city(const Vec2& local) const {
  return {anchor_.position.x + cos_ * local.x - sin_ * local.y,
          anchor_.position.y + sin_ * local.x + cos_ * local.y};
}

Vec2 Frame::rotate_to_local(const Vec2& v) const {
  return {cos_ * v.x + sin_ * v.y, -sin_ * v.x + cos_ * v.y};
}

Vec2 Frame::rotate_to_city(const Vec2& v) const {
  return {cos_ * v.x - sin_ * v.y, sin_ * v.x + cos_ * v.y};
}

double anchor_heading(const std::vector<Vec2>& observed) {
  if (observed.size() < 2) return 0.0;
  const Vec2 last = observed.back() - observed[observed.size() - 2];
  if (last.norm() >= 0.1) return std::atan2(last.y, last.x);
  // Fall back to the largest observed displacement, most recent on ties.
  double best = 0.0;
  Vec2 best_d{0.0, 0.0};
  for (size_t i = 1; i < observed.size(); ++i) {
    const Vec2 d = observed[i] - observed[i - 1];
    if (d.norm() >= best) {
      best = d.norm();
      best_d = d;
    }
  }
  if (best < 1e-9) return 0.0;
  return std::atan2(best_d.y, best_d.x);
}

}  // namespace laneattn::geo
