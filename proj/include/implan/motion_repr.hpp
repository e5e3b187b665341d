#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "implan/kinematics.hpp"
#include "implan/types.hpp"

namespace implan {

enum class MotionSource { robot, demonstrator };

/// A motion is an ordered sequence of at least two states: joint states for
/// robot motions, marker frames for demonstrator recordings.
struct Motion {
  MotionSource source = MotionSource::robot;
  std::vector<VecX> states;  // robot side
  MarkerPath frames;         // demonstrator side

  static Motion from_states(std::vector<VecX> s);
  static Motion from_frames(MarkerPath f);

  std::size_t size() const {
    return source == MotionSource::robot ? states.size() : frames.size();
  }
};

inline constexpr int kReprSteps = 30;
inline constexpr int kReprChannels = 6;

/// Fixed-size encoding of a motion: per resampled timestep the unit
/// shoulder->elbow direction followed by the unit elbow->hand direction.
/// Identical for demonstrator and robot motions of the same shape, whatever
/// the segment lengths or sampling rate.
struct MotionRepr {
  Eigen::Matrix<double, kReprSteps, kReprChannels> grid;

  bool operator==(const MotionRepr& o) const { return grid == o.grid; }
};

/// Flattened row-major view (t-major), the discriminator's input layout.
Eigen::Matrix<double, kReprSteps * kReprChannels, 1> flatten(const MotionRepr& r);

bool is_well_formed(const MotionRepr& r, double tol = 1e-6);

/// Marker polyline of a motion; robot states go through forward kinematics.
MarkerPath to_marker_path(const KinematicChain& chain, const Motion& motion);

/// Resamples a marker polyline to `count` points uniformly in cumulative
/// Cartesian arc length of the hand path. Falls back to index-uniform
/// placement when the total arc length is below 1e-9. Endpoints are kept
/// exactly.
MarkerPath resample_markers(const MarkerPath& path, int count);

/// r(M): resample to 30 points, emit unit segment directions.
MotionRepr encode_markers(const MarkerPath& path);
MotionRepr encode(const KinematicChain& chain, const Motion& motion);

/// Encodings of the sub-motions ending at each cumulative hand-arc-length
/// fraction. Fractions must be ascending with last == 1.0; a fraction that
/// falls between waypoints cuts an interpolated state.
std::vector<MotionRepr> prefix_representations(const KinematicChain& chain,
                                               const Motion& motion,
                                               std::span<const double> fractions);

/// Sub-polyline from the start to arc-length fraction f. f == 1 returns the
/// input unchanged.
MarkerPath cut_marker_path(const MarkerPath& path, double fraction);

/// Rotates a demonstrator motion about its base so the mean unit
/// shoulder->hand direction aligns with +Z. Antipodal mean directions pin
/// the rotation axis to +X. Throws when the mean direction is degenerate.
Motion direction_normalize(const Motion& motion);

/// Cuts a demonstrator motion at frames whose instantaneous hand speed
/// drops below tau_v; keeps segments of at least two frames whose mean hand
/// speed reaches tau_v.
std::vector<Motion> velocity_split(const Motion& motion, double tau_v, double dt);

struct LabeledEntry {
  MotionRepr repr;
  bool real = false;   // true: desired set, false: planner-generated
  int iteration = -1;  // provenance: loop iteration that produced it
  int query_id = -1;   // provenance: planning query id (or file index)
};

struct LabeledDataset {
  std::vector<LabeledEntry> entries;

  std::size_t count(bool real) const;
  bool has_both_labels() const { return count(true) > 0 && count(false) > 0; }
};

}  // namespace implan
