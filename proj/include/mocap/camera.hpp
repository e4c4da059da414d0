#pragma once

#include "mocap/types.hpp"

#include <string>
#include <vector>

namespace mocap {

/// One calibrated pinhole camera. World frame is right-handed, z-up,
/// meters; pixel coordinates are continuous with the origin at the
/// top-left corner and y increasing downward. Distortion is assumed
/// compensated upstream.
///
/// Immutable after construction; safe for concurrent reads.
struct CameraModel {
    int id = 0;
    Mat3 intrinsics = Mat3::Identity();  // K, pixels
    Mat3 rotation = Mat3::Identity();    // R, world -> camera
    Vec3 translation = Vec3::Zero();     // t, camera frame, meters
    int width = 0;                       // I_x
    int height = 0;                      // I_y
    int viewpoint = 0;

    /// K [R | t], the 3x4 projection matrix.
    Mat34 projection_matrix() const;

    /// Camera center in world coordinates (-R^T t).
    Vec3 center() const { return -rotation.transpose() * translation; }

    /// Depth of a world point along the optical axis (z in camera frame).
    double depth(const Vec3& point) const { return (rotation * point + translation).z(); }

    /// Validates orthonormality of R, the upper-triangular form of K, and
    /// the principal point lying inside the image. Throws FormatError.
    void validate() const;
};

/// Projects a world point to continuous pixel coordinates. The result may
/// lie outside the image rectangle; callers clamp or test visibility.
/// Throws BehindCameraError when the point has non-positive depth.
Vec2 project(const CameraModel& cam, const Vec3& point);

/// True iff the point has positive depth and projects inside
/// [0, width) x [0, height). Never throws.
bool is_visible(const CameraModel& cam, const Vec3& point);

/// The cameras of one capture setup plus their grouping into viewpoints.
/// Every camera belongs to exactly one viewpoint and every viewpoint is
/// non-empty.
struct CameraRig {
    std::vector<CameraModel> cameras;

    int viewpoint_count() const;
    /// Camera indices (into `cameras`) at viewpoint v.
    std::vector<int> cameras_at(int viewpoint) const;
    const CameraModel& by_id(int camera_id) const;

    /// Checks the viewpoint partition and every camera. Throws FormatError.
    void validate() const;
};

/// Rig file I/O (JSON). Round-trips all parameters to at least 1e-12
/// relative fidelity.
CameraRig load_rig(const std::string& path);
void save_rig(const CameraRig& rig, const std::string& path);

CameraRig rig_from_json_text(const std::string& text);
std::string rig_to_json_text(const CameraRig& rig);

}  // namespace mocap
