#pragma once

#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

#include <array>
#include <vector>

namespace mocap {

/// One positional target per keypoint, in meters. Targets with weight
/// below IkConfig::min_weight (or active=false) are ignored.
struct IkTarget {
    Vec3 position = Vec3::Zero();
    double weight = 0.0;
    bool active = false;
};

using IkTargets = std::array<IkTarget, kKeypointCount>;

struct IkConfig {
    double damping = 1e-4;          // lambda, added to the scaled normal equations
    int max_iterations = 50;
    double step_tolerance = 1e-8;   // rad / m, on the accepted step norm
    double residual_tolerance = 1e-7;  // m, on the rms weighted residual
    bool rom_enforced = false;      // clamp q into the RoM box every iteration
    double min_weight = 1e-6;       // targets below this are deactivated
    double regularization = 1e-3;   // pull toward the reference for keypoint-less joints
    /// Reference angles for the regularization pull (the previous frame in
    /// tracking). Empty: the warm start q_init is used.
    VecX reference;
};

struct IkReport {
    std::vector<double> residuals;  // weighted rms residual per accepted iteration, meters
    int iterations = 0;
    bool converged = false;
    double final_residual = 0.0;
    int active_targets = 0;
};

struct IkResult {
    JointAngles q;
    JointPositions positions;
    IkReport report;
};

/// Damped weighted least-squares fit of the skeleton's keypoint-mapped
/// joint positions to the targets, warm-started at q_init. Weights enter
/// per keypoint; the weighted residual is non-increasing across accepted
/// iterations. Joint angles of joints owning no keypoint are softly
/// pulled toward q_init (cfg.regularization, relative to the mean target
/// weight) so the 40-DoF solve stays well posed.
///
/// Throws IllPosedError when fewer than 4 targets are active and
/// NumericalFailureError on non-finite intermediates.
IkResult solve_weighted(const SkeletonModel& model, const JointAngles& q_init,
                        const IkTargets& targets, const IkConfig& cfg);

/// Same iteration with uniform weights and per-iteration projection onto
/// the RoM box; the output satisfies the RoM exactly.
IkResult solve_constrained(const SkeletonModel& model, const JointAngles& q_init,
                           const IkTargets& targets, const IkConfig& cfg);

}  // namespace mocap
