#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "implan/types.hpp"

namespace implan {

struct JointDescriptor {
  Vec3 axis;    // unit rotation axis in the parent frame
  double lo;    // lower limit, radians
  double hi;    // upper limit, radians
};

/// Serial chain of revolute joints. Frame k is the pose after applying
/// joints 1..k and their trailing link translations; frame 0 is the base.
/// Three frames are reported as shoulder/elbow/hand markers.
class KinematicChain {
 public:
  KinematicChain(std::vector<JointDescriptor> joints, std::vector<Vec3> links,
                 std::array<int, 3> marker_indices);

  /// 7-DOF anthropomorphic arm: three intersecting shoulder joints (axes
  /// Z, Y, X), one elbow joint (Y), three wrist joints (Z, Y, X). Upper arm
  /// 0.30 m, forearm 0.25 m, hand marker at the wrist. Zero pose points
  /// along +Z. Limits +-2.8 rad.
  static KinematicChain default_arm();

  /// Two revolute Z joints with unit X links; used for planar planning
  /// benchmarks.
  static KinematicChain planar_2dof();

  int dof() const { return static_cast<int>(joints_.size()); }
  const std::vector<JointDescriptor>& joints() const { return joints_; }
  const std::vector<Vec3>& links() const { return links_; }
  const std::array<int, 3>& marker_indices() const { return marker_indices_; }

  /// Sum of link lengths: radius of the reachable bounding sphere.
  double reach() const { return reach_; }

  bool within_limits(const VecX& q, double tol = 0.0) const;
  VecX clamp_to_limits(const VecX& q) const;
  VecX zero_state() const { return VecX::Zero(dof()); }

  VecX lower_limits() const;
  VecX upper_limits() const;

 private:
  std::vector<JointDescriptor> joints_;
  std::vector<Vec3> links_;
  std::array<int, 3> marker_indices_;
  double reach_;
};

/// Positions of the marker frames for configuration q. The shoulder marker
/// is the chain base and always lands on the origin.
Markers forward_kinematics(const KinematicChain& chain, const VecX& q);

/// Positions of every frame 0..dof; forward_kinematics picks markers out of
/// this. Exposed for collision geometry and plotting.
std::vector<Vec3> frame_positions(const KinematicChain& chain, const VecX& q);

/// Elbow swivel: signed rotation of the elbow about the shoulder->hand axis.
/// The zero reference is the projection of global +Z onto the plane normal
/// to that axis (global +X when the axis is within 1e-6 of +-Z). Returns 0
/// when the elbow lies on the axis (swivel undefined).
double elbow_swivel(const Markers& m);

enum class IkStatus { ok, unreachable, no_convergence };

struct IkResult {
  IkStatus status = IkStatus::no_convergence;
  VecX q;
  double position_error = 0.0;
  double swivel_error = 0.0;

  bool ok() const { return status == IkStatus::ok; }
};

struct IkOptions {
  double damping = 1e-2;      // DLS damping factor
  int max_iterations = 200;
  double step_clamp = 0.2;    // max joint-space step norm per iteration, rad
  double position_tol = 1e-4; // meters
  double swivel_tol = 1e-3;   // radians
};

/// Damped-least-squares IK on the stacked task (hand position + swivel).
IkResult inverse_kinematics(const KinematicChain& chain, const Vec3& target_hand,
                            double swivel, const VecX& seed_state,
                            const IkOptions& opts = {});

/// Samples k swivel angles uniformly on [0, 2pi) and solves IK for each;
/// only converged, in-limit solutions are returned, so the list may be
/// shorter than k (empty for unreachable targets).
std::vector<VecX> sample_goal_states(const KinematicChain& chain, const Vec3& target_hand,
                                     int k, std::uint64_t rng_seed,
                                     const IkOptions& opts = {});

}  // namespace implan
