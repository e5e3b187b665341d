#include "implan/motion_repr.hpp"

#include <algorithm>
#include <cmath>

namespace implan {

namespace {
constexpr double kDegenerateArc = 1e-9;
constexpr double kDegenerateSegment = 1e-12;

Markers lerp(const Markers& a, const Markers& b, double t) {
  return Markers{a.shoulder + t * (b.shoulder - a.shoulder),
                 a.elbow + t * (b.elbow - a.elbow),
                 a.hand + t * (b.hand - a.hand)};
}

std::vector<double> hand_arc_lengths(const MarkerPath& path) {
  std::vector<double> cum(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i)
    cum[i] = cum[i - 1] + (path[i].hand - path[i - 1].hand).norm();
  return cum;
}

// Frame at arc length s (or at index parameter u when degenerate).
Markers frame_at_arc(const MarkerPath& path, const std::vector<double>& cum, double s) {
  std::size_t hi = 1;
  while (hi + 1 < path.size() && cum[hi] < s) ++hi;
  const double seg = cum[hi] - cum[hi - 1];
  const double t = seg > 0 ? std::min(1.0, std::max(0.0, (s - cum[hi - 1]) / seg)) : 0.0;
  return lerp(path[hi - 1], path[hi], t);
}

Markers frame_at_index(const MarkerPath& path, double u) {
  const std::size_t i = std::min(path.size() - 2, static_cast<std::size_t>(u));
  return lerp(path[i], path[i + 1], u - static_cast<double>(i));
}
}  // namespace

Motion Motion::from_states(std::vector<VecX> s) {
  if (s.size() < 2) throw ContractError("motion needs at least two states");
  Motion m;
  m.source = MotionSource::robot;
  m.states = std::move(s);
  return m;
}

Motion Motion::from_frames(MarkerPath f) {
  if (f.size() < 2) throw ContractError("motion needs at least two states");
  Motion m;
  m.source = MotionSource::demonstrator;
  m.frames = std::move(f);
  return m;
}

Eigen::Matrix<double, kReprSteps * kReprChannels, 1> flatten(const MotionRepr& r) {
  Eigen::Matrix<double, kReprSteps * kReprChannels, 1> v;
  for (int t = 0; t < kReprSteps; ++t)
    for (int c = 0; c < kReprChannels; ++c) v[t * kReprChannels + c] = r.grid(t, c);
  return v;
}

bool is_well_formed(const MotionRepr& r, double tol) {
  for (int t = 0; t < kReprSteps; ++t) {
    if (std::abs(r.grid.row(t).head<3>().norm() - 1.0) > tol) return false;
    if (std::abs(r.grid.row(t).tail<3>().norm() - 1.0) > tol) return false;
  }
  return r.grid.allFinite();
}

MarkerPath to_marker_path(const KinematicChain& chain, const Motion& motion) {
  if (motion.size() < 2) throw ContractError("motion needs at least two states");
  if (motion.source == MotionSource::demonstrator) return motion.frames;
  MarkerPath path(motion.states.size());
  for (std::size_t i = 0; i < motion.states.size(); ++i)
    path[i] = forward_kinematics(chain, motion.states[i]);
  return path;
}

MarkerPath resample_markers(const MarkerPath& path, int count) {
  if (path.size() < 2) throw ContractError("marker path needs at least two frames");
  if (count < 2) throw ContractError("resample count must be >= 2");
  const auto cum = hand_arc_lengths(path);
  const double total = cum.back();

  MarkerPath out(static_cast<std::size_t>(count));
  out.front() = path.front();
  out.back() = path.back();
  for (int i = 1; i + 1 < count; ++i) {
    const double f = static_cast<double>(i) / (count - 1);
    out[static_cast<std::size_t>(i)] =
        total < kDegenerateArc ? frame_at_index(path, f * (path.size() - 1))
                               : frame_at_arc(path, cum, f * total);
  }
  return out;
}

MotionRepr encode_markers(const MarkerPath& path) {
  const MarkerPath pts = resample_markers(path, kReprSteps);
  MotionRepr repr;
  for (int t = 0; t < kReprSteps; ++t) {
    const auto& m = pts[static_cast<std::size_t>(t)];
    const Vec3 upper = m.elbow - m.shoulder;
    const Vec3 fore = m.hand - m.elbow;
    const double un = upper.norm();
    const double fn = fore.norm();
    if (un < kDegenerateSegment || fn < kDegenerateSegment)
      throw ContractError("zero-length arm segment in motion");
    repr.grid.row(t).head<3>() = (upper / un).transpose();
    repr.grid.row(t).tail<3>() = (fore / fn).transpose();
  }
  return repr;
}

MotionRepr encode(const KinematicChain& chain, const Motion& motion) {
  return encode_markers(to_marker_path(chain, motion));
}

MarkerPath cut_marker_path(const MarkerPath& path, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ContractError("prefix fraction must lie in (0, 1]");
  if (fraction == 1.0) return path;
  const auto cum = hand_arc_lengths(path);
  const double total = cum.back();

  MarkerPath out;
  if (total < kDegenerateArc) {
    // Index-uniform cut for motions whose hand does not move.
    const double u = fraction * static_cast<double>(path.size() - 1);
    const auto last = static_cast<std::size_t>(u);
    out.assign(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    if (u - static_cast<double>(last) > 0) out.push_back(frame_at_index(path, u));
  } else {
    const double s = fraction * total;
    std::size_t i = 0;
    while (i + 1 < path.size() && cum[i + 1] < s) ++i;
    out.assign(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    out.push_back(frame_at_arc(path, cum, s));
  }
  if (out.size() < 2) out.push_back(out.back());
  return out;
}

std::vector<MotionRepr> prefix_representations(const KinematicChain& chain,
                                               const Motion& motion,
                                               std::span<const double> fractions) {
  if (fractions.empty()) throw ContractError("prefix fractions must be non-empty");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (fractions[i] <= 0.0 || fractions[i] > 1.0)
      throw ContractError("prefix fraction must lie in (0, 1]");
    if (i > 0 && fractions[i] <= fractions[i - 1])
      throw ContractError("prefix fractions must be ascending");
  }
  if (fractions.back() != 1.0) throw ContractError("last prefix fraction must be 1.0");

  const MarkerPath path = to_marker_path(chain, motion);
  std::vector<MotionRepr> reprs;
  reprs.reserve(fractions.size());
  for (const double f : fractions) reprs.push_back(encode_markers(cut_marker_path(path, f)));
  return reprs;
}

Motion direction_normalize(const Motion& motion) {
  if (motion.source != MotionSource::demonstrator)
    throw ContractError("direction_normalize expects a demonstrator motion");
  const MarkerPath& frames = motion.frames;
  if (frames.size() < 2) throw ContractError("motion needs at least two states");

  const Vec3 base = frames.front().shoulder;
  Vec3 mean = Vec3::Zero();
  for (const auto& m : frames) {
    const Vec3 d = m.hand - m.shoulder;
    const double n = d.norm();
    if (n > kDegenerateSegment) mean += d / n;
  }
  mean /= static_cast<double>(frames.size());
  const double mean_norm = mean.norm();
  if (mean_norm <= 1e-6) throw ContractError("degenerate mean hand direction");

  const Vec3 a = mean / mean_norm;
  const Vec3 b = Vec3::UnitZ();
  const double c = a.dot(b);
  Mat3 rot;
  if (c >= 1.0 - 1e-15) {
    rot = Mat3::Identity();
  } else if (c <= -1.0 + 1e-15) {
    rot = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  } else {
    const Vec3 axis = a.cross(b).normalized();
    rot = Eigen::AngleAxisd(std::acos(std::clamp(c, -1.0, 1.0)), axis).toRotationMatrix();
  }

  MarkerPath out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out[i].shoulder = base + rot * (frames[i].shoulder - base);
    out[i].elbow = base + rot * (frames[i].elbow - base);
    out[i].hand = base + rot * (frames[i].hand - base);
  }
  return Motion::from_frames(std::move(out));
}

std::vector<Motion> velocity_split(const Motion& motion, double tau_v, double dt) {
  if (motion.source != MotionSource::demonstrator)
    throw ContractError("velocity_split expects a demonstrator motion");
  if (!(tau_v > 0)) throw ContractError("tau_v must be > 0");
  if (!(dt > 0)) throw ContractError("dt must be > 0");
  const MarkerPath& frames = motion.frames;

  // A segment is a maximal run of frames whose connecting transitions all
  // reach tau_v.
  std::vector<Motion> segments;
  std::size_t start = 0;
  bool open = false;
  auto close = [&](std::size_t end_exclusive) {
    if (!open) return;
    open = false;
    const std::size_t len = end_exclusive - start;
    if (len < 2) return;
    MarkerPath seg(frames.begin() + static_cast<std::ptrdiff_t>(start),
                   frames.begin() + static_cast<std::ptrdiff_t>(end_exclusive));
    double mean_speed = 0.0;
    for (std::size_t i = 1; i < seg.size(); ++i)
      mean_speed += (seg[i].hand - seg[i - 1].hand).norm() / dt;
    mean_speed /= static_cast<double>(seg.size() - 1);
    if (mean_speed >= tau_v) segments.push_back(Motion::from_frames(std::move(seg)));
  };

  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const double speed = (frames[i + 1].hand - frames[i].hand).norm() / dt;
    if (speed >= tau_v) {
      if (!open) {
        start = i;
        open = true;
      }
    } else {
      close(i + 1);
    }
  }
  close(frames.size());
  return segments;
}

std::size_t LabeledDataset::count(bool real) const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.real == real) ++n;
  return n;
}

}  // namespace implan
