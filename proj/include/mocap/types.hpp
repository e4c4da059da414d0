#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace mocap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

/// Base class for all engine errors. Subclasses distinguish bad input
/// data (FormatError), degenerate geometry, and numerical failures so the
/// CLI can map them to distinct exit codes.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Point has non-positive depth in the camera frame.
class BehindCameraError : public Error {
  public:
    explicit BehindCameraError(double depth)
        : Error("point behind camera (depth " + std::to_string(depth) + ")"), depth_(depth) {}
    double depth() const { return depth_; }

  private:
    double depth_;
};

/// Geometric configuration admits no unique solution (parallel rays,
/// collinear anchors, identical cameras, ...).
class DegenerateGeometryError : public Error {
  public:
    using Error::Error;
};

/// RANSAC found no consensus set of at least two rays.
class NoConsensusError : public Error {
  public:
    using Error::Error;
};

/// File does not match its declared format. Carries the byte offset of
/// the first inconsistency when known (-1 otherwise).
class FormatError : public Error {
  public:
    explicit FormatError(const std::string& what, long byte_offset = -1)
        : Error(what), byte_offset_(byte_offset) {}
    long byte_offset() const { return byte_offset_; }

  private:
    long byte_offset_;
};

/// Unknown camera/person/keypoint index.
class LookupError : public Error {
  public:
    using Error::Error;
};

/// Problem lacks the constraints for a well-posed solve.
class IllPosedError : public Error {
  public:
    using Error::Error;
};

/// Non-finite value produced during iteration.
class NumericalFailureError : public Error {
  public:
    using Error::Error;
};

/// Pose prediction requested with no history at all.
class NoHistoryError : public Error {
  public:
    using Error::Error;
};

/// Person initialization failed; lists the keypoints that could not be
/// triangulated.
class InitializationError : public Error {
  public:
    InitializationError(const std::string& what, std::vector<int> missing_keypoints)
        : Error(what), missing_(std::move(missing_keypoints)) {}
    const std::vector<int>& missing_keypoints() const { return missing_; }

  private:
    std::vector<int> missing_;
};

/// Cross-view identity assignment is ambiguous.
class AmbiguousIdentityError : public Error {
  public:
    using Error::Error;
};

/// Evaluation requested over an empty frame/joint selection.
class EmptyRangeError : public Error {
  public:
    using Error::Error;
};

}  // namespace mocap
