#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace bscloth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using VecX = Eigen::VectorXd;

/// Parameter or index outside the valid domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Rest geometry cannot be used for simulation (singular material map,
/// non-positive lumped mass).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two contact primitives touch or cross.
class InterpenetrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nonlinear or linear solve failure (stagnation, breakdown, non-finite energy).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scene description or command-line override.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bscloth
