#include "implan/kinematics.hpp"

#include <cmath>

#include "implan/rng.hpp"

namespace implan {

namespace {
constexpr double kAxisNormTol = 1e-9;
constexpr double kTwoPi = 2.0 * M_PI;

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - M_PI;
}
}  // namespace

KinematicChain::KinematicChain(std::vector<JointDescriptor> joints, std::vector<Vec3> links,
                               std::array<int, 3> marker_indices)
    : joints_(std::move(joints)), links_(std::move(links)), marker_indices_(marker_indices) {
  if (joints_.size() < 2) throw ContractError("chain needs dof >= 2");
  if (links_.size() != joints_.size())
    throw ContractError("chain needs one link translation per joint");
  for (const auto& j : joints_) {
    if (std::abs(j.axis.norm() - 1.0) > kAxisNormTol)
      throw ContractError("joint axis must have unit norm");
    if (!(j.lo < j.hi)) throw ContractError("joint limits must satisfy lo < hi");
    if (j.lo < -kTwoPi || j.hi > kTwoPi)
      throw ContractError("joint limits must lie within [-2pi, 2pi]");
  }
  if (marker_indices_[0] != 0) throw ContractError("shoulder marker must be the chain base");
  for (int i = 0; i < 3; ++i) {
    if (marker_indices_[i] < 0 || marker_indices_[i] > dof())
      throw ContractError("marker index out of range");
    if (i > 0 && marker_indices_[i] <= marker_indices_[i - 1])
      throw ContractError("marker indices must be strictly increasing");
  }
  reach_ = 0.0;
  for (const auto& l : links_) reach_ += l.norm();
}

KinematicChain KinematicChain::default_arm() {
  const double lim = 2.8;
  const Vec3 zero = Vec3::Zero();
  std::vector<JointDescriptor> joints = {
      {Vec3::UnitZ(), -lim, lim}, {Vec3::UnitY(), -lim, lim}, {Vec3::UnitX(), -lim, lim},
      {Vec3::UnitY(), -lim, lim},
      {Vec3::UnitZ(), -lim, lim}, {Vec3::UnitY(), -lim, lim}, {Vec3::UnitX(), -lim, lim}};
  std::vector<Vec3> links = {zero, zero, Vec3(0, 0, 0.30), Vec3(0, 0, 0.25),
                             zero, zero, zero};
  return KinematicChain(std::move(joints), std::move(links), {0, 3, 7});
}

KinematicChain KinematicChain::planar_2dof() {
  const double lim = 2.8;
  std::vector<JointDescriptor> joints = {{Vec3::UnitZ(), -lim, lim},
                                         {Vec3::UnitZ(), -lim, lim}};
  std::vector<Vec3> links = {Vec3(1, 0, 0), Vec3(1, 0, 0)};
  return KinematicChain(std::move(joints), std::move(links), {0, 1, 2});
}

bool KinematicChain::within_limits(const VecX& q, double tol) const {
  if (q.size() != dof()) return false;
  for (int i = 0; i < dof(); ++i)
    if (q[i] < joints_[i].lo - tol || q[i] > joints_[i].hi + tol) return false;
  return true;
}

VecX KinematicChain::clamp_to_limits(const VecX& q) const {
  VecX out = q;
  for (int i = 0; i < dof(); ++i)
    out[i] = std::min(joints_[i].hi, std::max(joints_[i].lo, out[i]));
  return out;
}

VecX KinematicChain::lower_limits() const {
  VecX lo(dof());
  for (int i = 0; i < dof(); ++i) lo[i] = joints_[i].lo;
  return lo;
}

VecX KinematicChain::upper_limits() const {
  VecX hi(dof());
  for (int i = 0; i < dof(); ++i) hi[i] = joints_[i].hi;
  return hi;
}

std::vector<Vec3> frame_positions(const KinematicChain& chain, const VecX& q) {
  if (q.size() != chain.dof())
    throw ContractError("joint vector size does not match chain dof");
  std::vector<Vec3> frames(static_cast<std::size_t>(chain.dof()) + 1);
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();
  frames[0] = pos;
  for (int i = 0; i < chain.dof(); ++i) {
    rot = rot * Eigen::AngleAxisd(q[i], chain.joints()[i].axis).toRotationMatrix();
    pos = pos + rot * chain.links()[i];
    frames[static_cast<std::size_t>(i) + 1] = pos;
  }
  return frames;
}

Markers forward_kinematics(const KinematicChain& chain, const VecX& q) {
  const auto frames = frame_positions(chain, q);
  const auto& idx = chain.marker_indices();
  return Markers{frames[static_cast<std::size_t>(idx[0])],
                 frames[static_cast<std::size_t>(idx[1])],
                 frames[static_cast<std::size_t>(idx[2])]};
}

double elbow_swivel(const Markers& m) {
  const Vec3 axis_raw = m.hand - m.shoulder;
  const double axis_len = axis_raw.norm();
  if (axis_len < 1e-12) return 0.0;
  const Vec3 w = axis_raw / axis_len;

  Vec3 ref = Vec3::UnitZ();
  if (std::abs(std::abs(w.z()) - 1.0) < 1e-6) ref = Vec3::UnitX();
  Vec3 u = ref - ref.dot(w) * w;
  const double un = u.norm();
  if (un < 1e-12) return 0.0;
  u /= un;

  const Vec3 v_full = m.elbow - m.shoulder;
  const Vec3 v = v_full - v_full.dot(w) * w;
  if (v.norm() < 1e-9) return 0.0;  // elbow on the axis: undefined
  return std::atan2(w.dot(u.cross(v)), u.dot(v));
}

namespace {

// Task residual: hand position error stacked with wrapped swivel error.
// When the elbow is (numerically) on the shoulder-hand axis the swivel is
// unconstrained and its residual is reported as zero.
Eigen::Vector4d ik_residual(const KinematicChain& chain, const VecX& q, const Vec3& target,
                            double swivel_target) {
  const Markers m = forward_kinematics(chain, q);
  Eigen::Vector4d r;
  r.head<3>() = target - m.hand;
  const Vec3 v_full = m.elbow - m.shoulder;
  const Vec3 axis = m.hand - m.shoulder;
  const double axis_len = axis.norm();
  double swivel_err = 0.0;
  if (axis_len > 1e-12) {
    const Vec3 w = axis / axis_len;
    const Vec3 v_perp = v_full - v_full.dot(w) * w;
    if (v_perp.norm() > 1e-9)
      swivel_err = wrap_angle(swivel_target - elbow_swivel(m));
  }
  r[3] = swivel_err;
  return r;
}

}  // namespace

IkResult inverse_kinematics(const KinematicChain& chain, const Vec3& target_hand,
                            double swivel, const VecX& seed_state, const IkOptions& opts) {
  if (seed_state.size() != chain.dof())
    throw ContractError("IK seed state size does not match chain dof");
  IkResult result;
  if (target_hand.norm() > chain.reach() + 1e-12) {
    result.status = IkStatus::unreachable;
    return result;
  }

  const int n = chain.dof();
  VecX q = chain.clamp_to_limits(seed_state);
  const double fd_h = 1e-6;
  const double damping2 = opts.damping * opts.damping;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Eigen::Vector4d r = ik_residual(chain, q, target_hand, swivel);
    const double pos_err = r.head<3>().norm();
    const double sw_err = std::abs(r[3]);
    if (pos_err <= opts.position_tol && sw_err <= opts.swivel_tol) {
      result.status = IkStatus::ok;
      result.q = q;
      result.position_error = pos_err;
      result.swivel_error = sw_err;
      return result;
    }

    // Central-difference Jacobian of the residual.
    Eigen::Matrix<double, 4, Eigen::Dynamic> jac(4, n);
    for (int j = 0; j < n; ++j) {
      VecX qp = q, qm = q;
      qp[j] += fd_h;
      qm[j] -= fd_h;
      jac.col(j) = -(ik_residual(chain, qp, target_hand, swivel) -
                     ik_residual(chain, qm, target_hand, swivel)) /
                   (2.0 * fd_h);
    }

    // Damped least squares: dq = J^T (J J^T + damping^2 I)^-1 r.
    Eigen::Matrix4d jjt = jac * jac.transpose();
    jjt.diagonal().array() += damping2;
    VecX dq = jac.transpose() * jjt.ldlt().solve(r);
    const double dq_norm = dq.norm();
    if (dq_norm > opts.step_clamp) dq *= opts.step_clamp / dq_norm;
    q = chain.clamp_to_limits(q + dq);
  }

  const Eigen::Vector4d r = ik_residual(chain, q, target_hand, swivel);
  result.status = IkStatus::no_convergence;
  result.q = q;
  result.position_error = r.head<3>().norm();
  result.swivel_error = std::abs(r[3]);
  return result;
}

std::vector<VecX> sample_goal_states(const KinematicChain& chain, const Vec3& target_hand,
                                     int k, std::uint64_t rng_seed, const IkOptions& opts) {
  if (k < 1) throw ContractError("sample_goal_states needs k >= 1");
  std::vector<VecX> goals;
  if (target_hand.norm() > chain.reach() + 1e-12) return goals;

  Rng rng(rng_seed);
  // Neutral seed pose with a bent elbow keeps DLS away from the stretched
  // singularity; a small per-sample jitter diversifies convergence basins.
  VecX neutral = chain.zero_state();
  if (chain.dof() >= 4) {
    neutral[1] = 0.3;
    neutral[3] = 0.8;
  }
  for (int i = 0; i < k; ++i) {
    const double swivel = rng.uniform(0.0, kTwoPi);
    VecX seed = neutral;
    for (int j = 0; j < seed.size(); ++j) seed[j] += 0.05 * rng.normal();
    seed = chain.clamp_to_limits(seed);
    const IkResult res = inverse_kinematics(chain, target_hand, swivel, seed, opts);
    if (res.ok() && chain.within_limits(res.q)) goals.push_back(res.q);
  }
  return goals;
}

}  // namespace implan
