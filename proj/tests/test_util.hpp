#pragma once

#include "mocap/camera.hpp"
#include "mocap/skeleton.hpp"

#include <random>
#include <string>

namespace mocap::test {

inline std::string config_path(const std::string& name) {
    return std::string(MOCAP_CONFIG_DIR) + "/" + name;
}

inline SkeletonModel default_skeleton() {
    static const SkeletonModel model = load_skeleton(config_path("skeleton_default.json"));
    return model;
}

/// Inverse of project at a given depth; test-only helper.
inline Vec3 backproject(const CameraModel& cam, const Vec2& pixel, double depth) {
    const Vec3 ray = cam.intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
    const Vec3 pc = ray / ray.z() * depth;
    return cam.rotation.transpose() * (pc - cam.translation);
}

inline CameraModel simple_camera(double f = 1000.0, double cx = 960.0, double cy = 600.0,
                                 int w = 1920, int h = 1200) {
    CameraModel cam;
    cam.intrinsics << f, 0, cx, 0, f, cy, 0, 0, 1;
    cam.width = w;
    cam.height = h;
    return cam;
}

/// Random pose with every rotational DoF uniform inside its RoM box
/// (shrunk by `margin` of the span) and the root near the origin.
inline JointAngles random_pose(const SkeletonModel& model, std::mt19937_64& rng,
                               double margin = 0.15) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    JointAngles q = JointAngles::Zero(kDofCount);
    for (const auto& jt : model.joints) {
        if (jt.rotational_dof() == 0) continue;
        const int rot0 = jt.type == DofType::Root6 ? jt.q_index + 3 : jt.q_index;
        for (int s = 0; s < jt.rotational_dof(); ++s) {
            double lo = jt.rom[s].lo, hi = jt.rom[s].hi;
            if (jt.type == DofType::Root6) {
                lo = -0.5;
                hi = 0.5;
            }
            const double m = margin * (hi - lo);
            q[rot0 + s] = lo + m + (hi - lo - 2 * m) * uni(rng);
        }
        if (jt.type == DofType::Root6)
            for (int s = 0; s < 3; ++s) q[jt.q_index + s] = 2.0 * uni(rng) - 1.0;
    }
    return q;
}

}  // namespace mocap::test
