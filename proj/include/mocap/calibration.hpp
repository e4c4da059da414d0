#pragma once

#include "mocap/camera.hpp"
#include "mocap/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mocap {

/// One 2D observation of the calibration sphere (or any tracked point).
struct TrackedPoint2D {
    int camera_id = 0;
    int frame = 0;
    Vec2 pixel = Vec2::Zero();
};

struct Ray {
    const CameraModel* camera = nullptr;
    Vec2 pixel = Vec2::Zero();
};

struct TriangulationResult {
    Vec3 point = Vec3::Zero();
    double rms_reprojection_px = 0.0;
};

/// Linear (DLT) triangulation of >= 2 rays, refined by one Gauss-Newton
/// step on the reprojection error. Throws DegenerateGeometryError when the
/// system is rank deficient (parallel or identical rays).
TriangulationResult triangulate(const std::vector<Ray>& rays);

struct RansacResult {
    Vec3 point = Vec3::Zero();
    double rms_reprojection_px = 0.0;
    std::vector<int> inliers;  // indices into the ray list
};

/// RANSAC over 2-ray minimal samples; the final point is triangulated from
/// the maximal consensus set. Deterministic given the seed. Throws
/// NoConsensusError when no 2-ray consensus exists.
RansacResult triangulate_ransac(const std::vector<Ray>& rays, double threshold_px,
                                int iterations, std::uint64_t seed);

/// Appendix-style extrinsic refinement problem: a rig with roughly known
/// extrinsics plus per-frame sphere observations. Every observed frame
/// must have >= 2 observing cameras.
struct CalibrationProblem {
    CameraRig rig;
    std::vector<TrackedPoint2D> observations;
    std::vector<bool> fixed_intrinsics;  // per camera index; empty = all free

    void validate() const;
};

struct BundleAdjustConfig {
    double initial_damping = 1e-3;
    int max_iterations = 200;
    double relative_tolerance = 1e-10;  // stop on relative residual change
};

struct BundleAdjustReport {
    double initial_rms_px = 0.0;
    double final_rms_px = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;  // rms after each accepted step
};

struct BundleAdjustResult {
    CameraRig rig;
    std::vector<Vec3> points;   // refined sphere positions, one per observed frame
    std::vector<int> frames;    // frame index per point
    BundleAdjustReport report;
};

/// Levenberg-Marquardt minimization of total squared reprojection error
/// over per-camera rotation (local so(3) updates), translation, and one
/// focal scale (principal point fixed), plus all sphere positions. Camera
/// 0's pose is frozen and the mean point distance to camera 0 is held to
/// fix the gauge. Throws DegenerateGeometryError on singular problems.
BundleAdjustResult bundle_adjust(const CalibrationProblem& problem,
                                 const BundleAdjustConfig& cfg = {});

/// Similarity transform y = scale * rotation * x + translation.
struct WorldAlignment {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return scale * rotation * x + translation; }
    /// Maps a camera along: new extrinsics observing the transformed world.
    CameraModel apply(const CameraModel& cam) const;
};

/// Closed-form (Umeyama) similarity from >= 3 non-collinear
/// correspondences, minimizing sum |s R x + t - y|^2. Throws
/// DegenerateGeometryError for collinear anchors.
WorldAlignment align_to_world(const std::vector<Vec3>& points_local,
                              const std::vector<Vec3>& points_world);

/// Observation file I/O (JSON records {frame, camera_id, x, y}).
std::vector<TrackedPoint2D> load_observations(const std::string& path);
void save_observations(const std::vector<TrackedPoint2D>& obs, const std::string& path);

}  // namespace mocap
