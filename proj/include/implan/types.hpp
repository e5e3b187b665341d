#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace implan {

using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;

/// Cartesian positions of the three reported arm frames, meters.
struct Markers {
  Vec3 shoulder{Vec3::Zero()};
  Vec3 elbow{Vec3::Zero()};
  Vec3 hand{Vec3::Zero()};
};

using MarkerPath = std::vector<Markers>;

/// Raised when an input violates a documented precondition.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised for config/IO problems the caller may want to report as usage errors.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace implan
