#pragma once

#include "mocap/camera.hpp"
#include "mocap/ik.hpp"
#include "mocap/motion.hpp"
#include "mocap/pcm.hpp"
#include "mocap/skeleton.hpp"

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace mocap {

/// Axis-aligned (rotation = 0) or rotated person box in pixels.
struct BoundingBox {
    Vec2 center = Vec2::Zero();
    Vec2 size = Vec2::Zero();
    double rotation = 0.0;  // radians; 0 for an upright subject
};

struct TrackerConfig {
    double margin = 1.25;                 // box size multiplier, > 1
    int lattice_halfwidth = 2;            // k
    double lattice_spacing = 0.02;        // s, meters
    double occlusion_weight = 0.5;        // g in [0, 1]
    double occlusion_radius_px = 15.0;    // r_occ
    bool rotation_enabled = true;
    double rotation_threshold = 0.5235987755982988;  // 30 deg
    double cutoff_hz = 10.0;              // low-pass cutoff
    int filter_order = 2;
    int smoothing_warmup = 2;             // frames passed through unfiltered
    double min_box_px = 32.0;             // minimum box side
    int lost_reentry_frames = -1;         // -1 = F/2
    int threads = 1;
    IkConfig ik;

    void validate() const;
};

TrackerConfig load_tracker_config(const std::string& path);
void save_tracker_config(const TrackerConfig& cfg, const std::string& path);

/// Ring buffer of the most recent reconstructed poses of one person.
/// Positions are kept consistent with angles via forward kinematics.
struct PoseHistory {
    struct Entry {
        JointAngles q;
        JointPositions positions;
    };
    double frame_rate = 60.0;
    std::deque<Entry> entries;  // oldest first, at most 3 kept

    void push(const JointAngles& q, const JointPositions& p);
    bool empty() const { return entries.empty(); }
};

/// Next-frame joint positions: 3/2 P_t - P_{t-1} + 1/2 P_{t-2} (the mean
/// of the uniformly-accelerated extrapolation and the current pose). With
/// two frames the constant-velocity form 2 P_t - P_{t-1} is used; with one
/// frame the pose itself. Throws NoHistoryError on an empty history.
JointPositions predict_pose(const PoseHistory& history);

/// Predicted box per the min/max projected extents scaled by the margin.
/// Joints with positive depth enter the extents; nullopt (person out of
/// view) when no joint is visible in the image. Sides are clamped to
/// min_box_px.
std::optional<BoundingBox> bounding_box(const JointPositions& pred, const CameraModel& cam,
                                        double margin, double min_box_px = 32.0);

/// Box rotation from the image inclination of the torso->neck vector,
/// wrapped to (-pi, pi]. An upright subject (neck directly above the torso
/// with image y down) yields 0; a subject lying with the head toward +x
/// yields +pi/2. Coincident projections fall back to 0.
double box_rotation(const JointPositions& pred, const CameraModel& cam,
                    const SkeletonModel& model);

/// Camera of the viewpoint whose image center is closest (squared pixel
/// distance) to the projected neck; ties go to the lowest camera id.
/// nullopt when the neck is invisible in every camera of the viewpoint.
std::optional<int> select_camera(const JointPositions& pred, const CameraRig& rig, int viewpoint,
                                 const SkeletonModel& model);

/// Per-viewpoint PCM weight for keypoint n of person `person`: g when some
/// joint of another person projects within r_occ pixels of the keypoint's
/// prediction in the chosen camera and sits nearer the camera, else 1.
/// `chosen` has one camera index (into rig.cameras) or -1 per viewpoint.
std::vector<double> occlusion_weights(const std::vector<JointPositions>& all_predictions,
                                      int person, const Vec3& keypoint_pred,
                                      const CameraRig& rig, const std::vector<int>& chosen,
                                      const TrackerConfig& cfg);

struct LatticeResult {
    Vec3 point = Vec3::Zero();   // P_key
    double weight = 0.0;         // W, unweighted PCM sum at the argmax
    Eigen::Vector3i cell{0, 0, 0};
};

/// Exhaustive maximum of the occlusion-weighted PCM sum over the
/// (2k+1)^3 lattice centered on the prediction. The center cell wins all
/// ties it is part of; remaining ties break to the lexicographically
/// smallest (a, b, c). Invisible-camera terms contribute 0.
LatticeResult lattice_search(const Vec3& pred, const PcmSet& pcm, int person, int keypoint,
                             const CameraRig& rig, const std::vector<int>& chosen,
                             const std::vector<double>& viewpoint_weights,
                             const TrackerConfig& cfg);

/// Streaming low-pass filter (Butterworth via bilinear transform), one
/// state per coordinate channel. A cutoff at or above Nyquist disables the
/// filter; the first `warmup` samples pass through unfiltered.
class LowPassFilter {
  public:
    LowPassFilter() = default;
    LowPassFilter(double cutoff_hz, double sample_rate_hz, int order, int warmup);

    /// Filters one frame of joint positions (called once per frame).
    JointPositions step(const JointPositions& in);

    bool passthrough() const { return passthrough_; }
    /// Magnitude response of the implemented recursion at f Hz.
    double magnitude_response(double f_hz) const;

  private:
    bool passthrough_ = true;
    double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
    double sample_rate_ = 60.0;
    int order_ = 2;
    int warmup_ = 0;
    long samples_seen_ = 0;
    MatX x1_, x2_, y1_, y2_;  // per-channel state
};

struct PersonFrameResult {
    JointAngles q;                                     // Q', RoM satisfied
    JointPositions positions;                          // P' = FK(Q')
    JointPositions smoothed;                           // P_smo, stage-2 target source
    std::array<Vec3, kKeypointCount> keypoints{};      // P_key
    std::array<double, kKeypointCount> weights{};      // W
    std::vector<int> chosen_cameras;                   // camera id per viewpoint, -1 skipped
    std::vector<BoundingBox> boxes;                    // per viewpoint, chosen camera
    bool lost = false;
};

struct FrameResult {
    int frame = 0;
    std::vector<PersonFrameResult> persons;
};

/// Initial state of one tracked person (from module init).
struct PersonInit {
    SkeletonModel model;
    JointAngles q;
    JointPositions positions;
};

/// Orchestrates the per-frame loop for all persons: predict, select
/// cameras, occlusion weights, lattice search, weighted IK, low-pass
/// smoothing, RoM-constrained IK. Phase 1 snapshots all predictions,
/// phase 2 processes persons independently (optionally in parallel),
/// phase 3 commits histories; results are scheduling independent.
class Tracker {
  public:
    Tracker(CameraRig rig, TrackerConfig cfg, const std::vector<PersonInit>& persons,
            double frame_rate, int start_frame = 0);

    /// Processes the next frame; pcm.frame() must equal next_frame().
    FrameResult step_frame(const PcmSet& pcm);

    int next_frame() const { return cursor_; }
    int person_count() const { return static_cast<int>(persons_.size()); }
    const MotionSequence& sequence(int person) const { return sequences_[person]; }
    const SkeletonModel& person_model(int person) const { return persons_[person].model; }
    /// Person declared permanently lost after too many lost frames.
    bool abandoned(int person) const { return persons_[person].abandoned; }

  private:
    struct PersonState {
        SkeletonModel model;
        PoseHistory history;
        LowPassFilter filter;
        std::array<double, kKeypointCount> last_weights{};
        JointPositions last_prediction;
        int lost_streak = 0;
        bool abandoned = false;
    };

    PersonFrameResult track_person(int person, const std::vector<JointPositions>& predictions,
                                   const PcmSet& pcm);

    CameraRig rig_;
    TrackerConfig cfg_;
    double frame_rate_;
    int cursor_;
    int lost_limit_;
    std::vector<PersonState> persons_;
    std::vector<MotionSequence> sequences_;
};

}  // namespace mocap
