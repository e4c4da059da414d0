#pragma once

#include "mocap/calibration.hpp"
#include "mocap/camera.hpp"
#include "mocap/ik.hpp"
#include "mocap/pcm.hpp"
#include "mocap/skeleton.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mocap {

/// First-frame 2D keypoints of one person seen from one camera. Missing
/// keypoints carry confidence 0.
struct InitObservation {
    int camera = 0;  // index into rig.cameras
    std::array<Vec2, kKeypointCount> pixels{};
    std::array<double, kKeypointCount> confidences{};
};

struct InitConfig {
    double confidence_threshold = 0.3;  // below: keypoint missing in that view
    double ransac_threshold_px = 2.0;
    int ransac_iterations = 100;
    std::uint64_t seed = 1;
    IkConfig ik{.damping = 1e-4,
                .max_iterations = 300,
                .step_tolerance = 1e-13,
                .residual_tolerance = 1e-12};
};

struct InitResult {
    SkeletonModel model;  // template with personalized link lengths
    JointAngles q;
    JointPositions positions;
    std::array<Vec3, kKeypointCount> keypoints3d{};
};

/// Appendix-style person initialization: RANSAC-triangulate every
/// keypoint, derive link lengths (left/right averaged to equality,
/// non-keypoint links proportional to the estimated stature, spine and
/// scapula placed by straight-trunk rules), then fit a RoM-constrained
/// pose to the triangulated keypoints. Throws InitializationError listing
/// keypoints seen by fewer than two confident views.
InitResult initialize_person(const std::vector<InitObservation>& observations,
                             const CameraRig& rig, const SkeletonModel& template_model,
                             const InitConfig& cfg = {});

/// Extracts first-frame observations from the confidence fields' peaks.
std::vector<InitObservation> observations_from_pcm(const PcmSet& pcm, const CameraRig& rig,
                                                   int person);

/// Manually supplied initial box.
struct ManualBox {
    int person = 0;
    int camera = 0;
    Vec2 center = Vec2::Zero();
    Vec2 size = Vec2::Zero();
};

/// One bottom-up detection (unlabeled person candidate) in one camera.
struct Detection {
    std::array<Vec2, kKeypointCount> pixels{};
    std::array<double, kKeypointCount> confidences{};
};

struct DetectionSet {
    int camera = 0;  // index into rig.cameras
    std::vector<Detection> detections;
};

struct BootstrapResult {
    /// assignment[person][camera-set index] = detection index or -1.
    std::vector<std::vector<int>> assignment;
    std::vector<ManualBox> boxes;
};

/// Manual boxes pass through unchanged.
std::vector<ManualBox> bootstrap_boxes(const std::vector<ManualBox>& manual);

/// Groups bottom-up detections across views by mean symmetric epipolar
/// distance against the first camera's detections. Throws
/// AmbiguousIdentityError when two groupings tie.
BootstrapResult bootstrap_from_detections(const std::vector<DetectionSet>& sets,
                                          const CameraRig& rig, double epipolar_threshold_px,
                                          double confidence_threshold = 0.3);

std::vector<ManualBox> load_manual_boxes(const std::string& path);
void save_manual_boxes(const std::vector<ManualBox>& boxes, const std::string& path);

}  // namespace mocap
