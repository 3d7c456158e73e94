#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laneattn/errors.hpp"

namespace laneattn::geo {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
};

/// Wrap an angle to (-pi, pi].
double normalize_angle(double a);

struct Pose2 {
  Vec2 position;
  double heading = 0.0;  // radians, (-pi, pi]
};

struct Lane {
  std::string id;
  std::vector<Vec2> centerline;  // >= 2 points, meters, city frame
  std::vector<std::string> successors;
  std::vector<std::string> predecessors;
  bool is_intersection = false;
};

using Polygon = std::vector<Vec2>;  // closed implicitly (last connects to first)

struct LaneGraph {
  std::map<std::string, Lane> lanes;
  std::vector<Polygon> drivable_area;
};

double polyline_length(const std::vector<Vec2>& pts);

/// Minimum distance from a point to a polyline (segments, not just vertices).
double point_to_polyline_distance(const std::vector<Vec2>& pts, const Vec2& p);

/// Uniform arc-length resampling; endpoints are preserved exactly.
std::vector<Vec2> resample_centerline(const Lane& lane, int n_points);
std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int n_points);

/// Lanes whose centerline is within `radius` of `position`, plus one hop of
/// their successors. Sorted ascending by distance, ties by id, truncated to
/// `max_lanes`.
std::vector<const Lane*> find_candidate_lanes(const LaneGraph& graph, const Vec2& position,
                                              double radius, int max_lanes);

/// Even-odd rule; points on the boundary count as inside.
bool point_in_polygon(const Polygon& poly, const Vec2& p);
bool point_in_drivable_area(const LaneGraph& graph, const Vec2& p);

/// Index of the lane minimizing mean distance over the last third of the
/// future trajectory; ties broken toward the lower index.
int lane_ground_truth(const std::vector<std::vector<Vec2>>& lanes,
                      const std::vector<Vec2>& future);

/// Heuristic non-straight classification over the full past+future track.
/// True when net heading change exceeds 30 degrees, lateral deviation from the
/// best-fit line exceeds 2 m, or the ground-truth lane differs from the lane
/// closest at the last observed point.
bool is_non_straight(const std::vector<Vec2>& track, int observed_len,
                     const std::vector<std::vector<Vec2>>& lanes);

/// Rigid transform into the agent-centric frame of an anchor pose (anchor at
/// origin, anchor heading along +x) and back.
class Frame {
 public:
  Frame() = default;
  explicit Frame(const Pose2& anchor);

  Vec2 to_local(const Vec2& city) const;
  Vec2 to_city(const Vec2& local) const;
  Vec2 rotate_to_local(const Vec2& v) const;  // for velocities
  Vec2 rotate_to_city(const Vec2& v) const;
  const Pose2& anchor() const { return anchor_; }

 private:
  Pose2 anchor_;
  double cos_ = 1.0;
  double sin_ = 0.0;
};

/// Anchor heading from the observed track: last displacement when it is at
/// least 0.1 m, otherwise the largest observed displacement, otherwise 0.
double anchor_heading(const std::vector<Vec2>& observed);

}  // namespace laneattn::geo
