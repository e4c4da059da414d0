#pragma once

#include "mocap/motion.hpp"
#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mocap {

/// Joint correspondence and selection between a predicted sequence and a
/// (possibly differently indexed) ground truth.
struct EvalPair {
    const MotionSequence* predicted = nullptr;
    const MotionSequence* truth = nullptr;
    /// (predicted joint, truth joint) pairs participating in evaluation.
    std::vector<std::pair<int, int>> joints;
    /// Limbs as (joint a, joint b) indices INTO `joints` (a limb uses the
    /// pair's predicted/truth columns consistently).
    std::vector<std::pair<int, int>> limbs;

    /// Overlapping frame range [first, last]; throws EmptyRangeError when
    /// the sequences do not overlap.
    std::pair<int, int> common_range() const;
    void validate() const;
};

/// Identity correspondence over the 12 body keypoints (shoulders, elbows,
/// wrists, hips, knees, ankles) with the 8 standard limbs; the
/// head-exclusion preset.
EvalPair body_eval_pair(const MotionSequence& predicted, const MotionSequence& truth,
                        const SkeletonModel& model);

/// Mean Euclidean distance between corresponding joints, millimeters,
/// over the given frame range (defaults to the full overlap).
double mpjpe_mm(const EvalPair& pair, std::optional<std::pair<int, int>> range = std::nullopt);

/// Per-frame MPJPE in millimeters over the common range.
std::vector<std::pair<int, double>> per_frame_mpjpe_mm(const EvalPair& pair);

/// Percentage of limbs whose BOTH endpoint errors are strictly below half
/// the true limb length. Throws on zero-length true limbs.
double pcp_endpoint(const EvalPair& pair, std::optional<std::pair<int, int>> range = std::nullopt);

/// Midpoint variant: limb correct iff the midpoint error is strictly
/// below half the true limb length.
double pcp_midpoint(const EvalPair& pair, std::optional<std::pair<int, int>> range = std::nullopt);

/// Percentage of joints within the threshold (inclusive), millimeters.
double pck(const EvalPair& pair, double threshold_mm,
           std::optional<std::pair<int, int>> range = std::nullopt);

/// Percentage of frames whose per-frame MPJPE is at most threshold_mm
/// (inclusive).
double success_rate(const EvalPair& pair, double threshold_mm = 150.0);

/// Frames whose per-frame MPJPE is at most the threshold; other metrics
/// are conditioned on these frames in reports.
std::vector<int> successful_frames(const EvalPair& pair, double threshold_mm = 150.0);

struct MetricsReport {
    double success_rate_pct = 0.0;
    double mpjpe_mm = 0.0;          // over successful frames
    double pcp_endpoint_pct = 0.0;  // over successful frames
    double pcp_midpoint_pct = 0.0;
    double pck50_pct = 0.0;
    double pck100_pct = 0.0;
    int frames = 0;
    int successful = 0;
};

/// Success-conditioned metric row (the paper's table structure): success
/// rate over all frames, every other metric over successful frames only.
MetricsReport evaluate(const EvalPair& pair, double success_threshold_mm = 150.0);

std::string metrics_report_to_json(const std::vector<MetricsReport>& per_person,
                                   const MetricsReport& aggregate);

}  // namespace mocap
