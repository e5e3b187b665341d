#pragma once

#include <vector>

#include "implan/kinematics.hpp"
#include "implan/types.hpp"

namespace implan {

struct Sphere {
  Vec3 center;
  double radius;
};

/// Obstacle scene: sphere obstacles against capsule-shaped arm segments.
struct Scene {
  std::vector<Sphere> spheres;
  double link_radius = 0.03;  // capsule thickness of each arm segment, meters

  bool empty() const { return spheres.empty(); }
  void validate() const;
};

/// Minimum distance from point p to segment [a, b].
double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& p);

/// True iff the shoulder-elbow or elbow-hand capsule intersects any sphere.
bool state_in_collision(const KinematicChain& chain, const VecX& q, const Scene& scene);

/// True iff any waypoint or any interpolated state between consecutive
/// waypoints (joint-space step norm <= resolution) is in collision.
bool motion_in_collision(const KinematicChain& chain, const std::vector<VecX>& states,
                         const Scene& scene, double resolution = 0.05);

/// Same interpolation rule for a single edge; the planner's edge check.
bool edge_in_collision(const KinematicChain& chain, const VecX& from, const VecX& to,
                       const Scene& scene, double resolution);

}  // namespace implan
