#pragma once

#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace mocap {

/// One person's state at one frame.
struct FramePose {
    int frame = 0;
    JointAngles q;                                  // kDofCount
    JointPositions positions;                       // kJointCount x 3
    std::array<double, kKeypointCount> weights{};   // per-keypoint confidence sum
    std::vector<int> cameras;                       // chosen camera per viewpoint, -1 = skipped
    bool lost = false;
};

/// Per-person time series of poses plus per-keypoint confidence weights;
/// the engine's output and the ground-truth container.
class MotionSequence {
  public:
    int person_id = 0;
    double frame_rate = 60.0;
    int viewpoint_count = 0;
    std::vector<FramePose> frames;

    int start_frame() const { return frames.empty() ? 0 : frames.front().frame; }
    int end_frame() const { return frames.empty() ? -1 : frames.back().frame; }
    bool has_frame(int frame) const {
        return frame >= start_frame() && frame <= end_frame();
    }
    /// Frames are contiguous; throws LookupError for out-of-range frames.
    const FramePose& at_frame(int frame) const;
};

/// Columnar text format, one row per frame:
///   frame q[40] p[29x3] w[17] cam[n_v] lost
/// Numbers use shortest round-trip formatting; identical sequences
/// serialize byte-identically.
std::string motion_to_text(const MotionSequence& seq);
MotionSequence motion_from_text(const std::string& text);

void save_motion(const MotionSequence& seq, const std::string& path);
MotionSequence load_motion(const std::string& path);

}  // namespace mocap
