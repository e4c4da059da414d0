#pragma once

#include "mocap/types.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace mocap {

inline constexpr int kJointCount = 29;
inline constexpr int kDofCount = 40;
inline constexpr int kKeypointCount = 17;

/// Joint angle vector, kDofCount entries. Root translation in meters,
/// rotations in radians, laid out per SkeletonModel::joints[i].q_index.
using JointAngles = VecX;

/// World-frame joint positions, one row per joint, meters.
using JointPositions = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class DofType {
    Root6,     // 3 translations + 3 rotations (x-y-z order), root only
    EulerXYZ,  // 3 rotations, fixed x-y-z order
    Hinge,     // 1 rotation about a fixed axis in the joint frame
    Fixed,     // rigidly attached marker joint
};

struct RomBound {
    double lo = 0.0;
    double hi = 0.0;
};

struct Joint {
    std::string name;
    int parent = -1;             // -1 for the root
    DofType type = DofType::Fixed;
    Vec3 offset = Vec3::Zero();  // position in parent frame; |offset| is the link length
    Vec3 hinge_axis = Vec3::UnitX();
    std::vector<RomBound> rom;   // one per rotational DoF
    int q_index = -1;            // first entry in the angle vector, -1 if none

    int dof_total() const;
    int rotational_dof() const;
};

/// The 29-joint, 40-DoF skeletal template: tree topology, link lengths,
/// range-of-motion table, and the 17-keypoint correspondence. Loaded from
/// a versioned config file; immutable in use (copy, then set_link_length,
/// to personalize).
struct SkeletonModel {
    std::vector<Joint> joints;
    std::array<int, kKeypointCount> keypoint_map{};  // keypoint -> owning joint index
    std::vector<int> traversal;                      // parents-first joint order
    int version = 0;

    int joint_index(const std::string& name) const;  // throws LookupError
    int neck_joint() const { return neck_joint_; }
    int torso_joint() const { return torso_joint_; }

    double link_length(int joint) const { return joints[joint].offset.norm(); }
    /// Rescales the offset to the given length, preserving direction.
    void set_link_length(int joint, double length);

    /// Left/right joint pairs, matched by the l_/r_ name prefix.
    const std::vector<std::pair<int, int>>& symmetric_pairs() const { return symmetric_; }

    /// Recomputes traversal order and cached indices; validates all
    /// invariants (29 joints, 40 DoF, connected acyclic tree, positive
    /// link lengths, left/right length equality, rom lo < hi).
    /// Throws FormatError on violation.
    void finalize();

    static SkeletonModel from_json_text(const std::string& text);
    std::string to_json_text() const;

  private:
    int neck_joint_ = -1;
    int torso_joint_ = -1;
    std::vector<std::pair<int, int>> symmetric_;
};

SkeletonModel load_skeleton(const std::string& path);
void save_skeleton(const SkeletonModel& model, const std::string& path);

/// Forward-kinematics evaluation with the per-DoF data needed for the
/// geometric Jacobian.
struct FkResult {
    JointPositions positions;            // kJointCount x 3
    std::vector<Mat3> world_rotations;   // per joint
    MatX dof_axes;                       // kDofCount x 3; rows 0..2 unused (root translation)
    MatX dof_origins;                    // kDofCount x 3
};

FkResult forward_kinematics_full(const SkeletonModel& model, const JointAngles& q);

/// Root-to-leaf composition of rigid transforms; positions only.
JointPositions forward_kinematics(const SkeletonModel& model, const JointAngles& q);

/// Analytic geometric Jacobian d(positions)/d(q), stacked 29 joints x 3
/// rows (row 3*j+c is coordinate c of joint j) by kDofCount columns.
/// Columns for DoF not on the root-to-joint path are zero.
MatX jacobian(const SkeletonModel& model, const JointAngles& q);

/// Per-DoF clamp of rotational entries into [lo, hi]; translations
/// untouched. Idempotent.
JointAngles clamp_to_rom(const SkeletonModel& model, const JointAngles& q);

/// True iff every rotational entry lies inside its RoM bounds (inclusive).
bool rom_satisfied(const SkeletonModel& model, const JointAngles& q);

}  // namespace mocap
