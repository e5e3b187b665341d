#include "implan/collision.hpp"

#include <cmath>

namespace implan {

void Scene::validate() const {
  for (const auto& s : spheres)
    if (!(s.radius > 0)) throw ContractError("sphere radius must be > 0");
  if (link_radius < 0) throw ContractError("link_radius must be >= 0");
}

double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-30) return (p - a).norm();
  const double t = std::min(1.0, std::max(0.0, ab.dot(p - a) / len2));
  return (p - (a + t * ab)).norm();
}

namespace {

bool markers_in_collision(const Markers& m, const Scene& scene) {
  for (const auto& s : scene.spheres) {
    const double thr = s.radius + scene.link_radius;
    if (segment_point_distance(m.shoulder, m.elbow, s.center) <= thr) return true;
    if (segment_point_distance(m.elbow, m.hand, s.center) <= thr) return true;
  }
  return false;
}

}  // namespace

bool state_in_collision(const KinematicChain& chain, const VecX& q, const Scene& scene) {
  if (scene.empty()) return false;
  return markers_in_collision(forward_kinematics(chain, q), scene);
}

bool edge_in_collision(const KinematicChain& chain, const VecX& from, const VecX& to,
                       const Scene& scene, double resolution) {
  if (scene.empty()) return false;
  const double dist = (to - from).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(dist / resolution)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    if (state_in_collision(chain, from + t * (to - from), scene)) return true;
  }
  return false;
}

bool motion_in_collision(const KinematicChain& chain, const std::vector<VecX>& states,
                         const Scene& scene, double resolution) {
  if (states.size() < 2) throw ContractError("motion needs at least two states");
  if (scene.empty()) return false;
  for (std::size_t i = 0; i + 1 < states.size(); ++i)
    if (edge_in_collision(chain, states[i], states[i + 1], scene, resolution)) return true;
  return false;
}

}  // namespace implan
