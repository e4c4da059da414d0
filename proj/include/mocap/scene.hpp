#pragma once

#include "mocap/camera.hpp"
#include "mocap/motion.hpp"
#include "mocap/pcm.hpp"
#include "mocap/skeleton.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mocap {

/// Parameters of the bundled synthetic capture scene: band-limited joint
/// motion for n persons inside a studio rig, plus the PCM degradation
/// knobs forwarded to the synthetic oracle.
struct SceneConfig {
    int persons = 5;
    double duration_s = 10.0;
    double frame_rate = 60.0;
    double motion_band_hz = 1.2;      // highest joint-motion harmonic
    double motion_scale = 0.22;       // harmonic amplitude as a fraction of RoM slack
    double wander_radius_m = 0.5;     // root translation orbit radius
    std::uint64_t seed = 1;

    // PCM degradation (see SyntheticSceneConfig).
    double blob_sigma_px = 8.0;
    double amplitude = 1.0;
    double center_noise_px = 0.0;
    double dropout = 0.0;
    int false_positives = 0;
    double false_positive_amplitude = 0.8;
    bool occlusion_confusion = false;
    double confusion_radius_px = 15.0;

    void validate() const;
};

SceneConfig load_scene_config(const std::string& path);
void save_scene_config(const SceneConfig& cfg, const std::string& path);

/// The 8-camera / 4-viewpoint studio rig used by the bundled scenes:
/// viewpoints at the corners of roughly a 5 x 7 m area, two cameras with
/// different focal lengths per viewpoint, 1920 x 1200 at 60 Hz.
CameraRig make_studio_rig();

/// Deterministic band-limited ground-truth motion for every person. Each
/// trajectory starts at the rest pose (straight trunk) so Appendix-style
/// initialization rules hold at frame 0, stays strictly inside the RoM,
/// and keeps everyone inside the rig's coverage. Per-person link lengths
/// are scaled copies of the template; the scaled models are returned.
struct GroundTruthScene {
    std::vector<MotionSequence> sequences;
    std::vector<SkeletonModel> models;  // per person, scaled template
};

GroundTruthScene generate_ground_truth(const SceneConfig& cfg, const SkeletonModel& template_model,
                                       const CameraRig& rig);

/// Oracle config wired to this scene's ground truth.
SyntheticSceneConfig synthetic_pcm_config(const SceneConfig& cfg, const CameraRig& rig,
                                          const SkeletonModel& skeleton,
                                          const GroundTruthScene& scene);

/// Lissajous sphere path covering a box volume; used to synthesize
/// calibration observations.
std::vector<Vec3> lissajous_path(int samples, const Vec3& center, const Vec3& half_extent);

}  // namespace mocap
