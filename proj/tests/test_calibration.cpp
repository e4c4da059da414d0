#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mocap/calibration.hpp"
#include "mocap/scene.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <random>

using namespace mocap;

namespace {

// Ring of cameras looking at the origin region, n_v viewpoints.
CameraRig ring_rig(int cameras, double radius, double height, double focal = 1100.0) {
    CameraRig rig;
    for (int i = 0; i < cameras; ++i) {
        const double a = 2.0 * M_PI * i / cameras;
        CameraModel cam = test::simple_camera(focal);
        cam.id = i;
        cam.viewpoint = i % 4;
        const Vec3 pos(radius * std::cos(a), radius * std::sin(a), height);
        const Vec3 fwd = (Vec3(0, 0, 1.0) - pos).normalized();
        const Vec3 up(0, 0, 1);
        const Vec3 right = fwd.cross(up).normalized();
        const Vec3 down = fwd.cross(right);
        cam.rotation.row(0) = right.transpose();
        cam.rotation.row(1) = down.transpose();
        cam.rotation.row(2) = fwd.transpose();
        cam.translation = -cam.rotation * pos;
        rig.cameras.push_back(cam);
    }
    return rig;
}

CameraRig perturb_rig(const CameraRig& rig, double rot_deg, double trans_m, double focal_rel,
                      std::uint64_t seed, bool keep_first_fixed = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    CameraRig out = rig;
    for (size_t i = keep_first_fixed ? 1 : 0; i < out.cameras.size(); ++i) {
        CameraModel& cam = out.cameras[i];
        const Vec3 axis = Vec3(uni(rng), uni(rng), uni(rng)).normalized();
        cam.rotation = cam.rotation *
                       Eigen::AngleAxisd(rot_deg * M_PI / 180.0, axis).toRotationMatrix();
        cam.translation += trans_m * Vec3(uni(rng), uni(rng), uni(rng)).normalized();
        const double f = 1.0 + focal_rel * uni(rng);
        cam.intrinsics(0, 0) *= f;
        cam.intrinsics(1, 1) *= f;
    }
    return out;
}

std::vector<TrackedPoint2D> observe_path(const CameraRig& rig, const std::vector<Vec3>& path,
                                         double noise_px, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<TrackedPoint2D> obs;
    for (size_t f = 0; f < path.size(); ++f) {
        for (const auto& cam : rig.cameras) {
            if (!is_visible(cam, path[f])) continue;
            Vec2 u = project(cam, path[f]);
            if (noise_px > 0.0) u += noise_px * Vec2(gauss(rng), gauss(rng));
            obs.push_back({cam.id, static_cast<int>(f), u});
        }
    }
    return obs;
}

}  // namespace

TEST_CASE("triangulate recovers an exactly observed point") {
    const CameraRig rig = ring_rig(4, 5.0, 2.0);
    const Vec3 p(1.0, 2.0, 3.0);
    std::vector<Ray> rays;
    for (int i = 0; i < 2; ++i) rays.push_back({&rig.cameras[i], project(rig.cameras[i], p)});
    const TriangulationResult r = triangulate(rays);
    CHECK((r.point - p).norm() < 1e-9);
    CHECK(r.rms_reprojection_px < 1e-9);
}

TEST_CASE("triangulation error under pixel noise stays below 5 mm at range") {
    // Monte-Carlo oracle: 1000 noisy triangulations from a 4-viewpoint rig
    // with sigma = 0.5 px at ~5 m range establish the accuracy bound.
    const CameraRig rig = ring_rig(8, 5.0, 2.5);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double worst = 0.0, acc = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec3 p(1.5 * uni(rng), 1.5 * uni(rng), 1.0 + 0.8 * uni(rng));
        std::vector<Ray> rays;
        for (const auto& cam : rig.cameras) {
            Vec2 u = project(cam, p);
            u += Vec2(gauss(rng), gauss(rng));
            rays.push_back({&cam, u});
        }
        const double err = (triangulate(rays).point - p).norm();
        acc += err;
        worst = std::max(worst, err);
    }
    CHECK(acc / 1000.0 < 2e-3);  // mean well under the bound
    CHECK(worst < 5e-3);         // 5 mm bound from the oracle run
}

TEST_CASE("triangulate rejects degenerate geometry") {
    const CameraRig rig = ring_rig(4, 5.0, 2.0);
    const Vec3 p(0.5, -0.3, 1.2);
    SUBCASE("identical cameras") {
        std::vector<Ray> rays = {{&rig.cameras[0], project(rig.cameras[0], p)},
                                 {&rig.cameras[0], project(rig.cameras[0], p)}};
        CHECK_THROWS_AS(triangulate(rays), DegenerateGeometryError);
    }
    SUBCASE("fewer than two rays") {
        std::vector<Ray> rays = {{&rig.cameras[0], project(rig.cameras[0], p)}};
        CHECK_THROWS_AS(triangulate(rays), DegenerateGeometryError);
    }
    SUBCASE("parallel rays from offset cameras") {
        CameraRig two;
        CameraModel a = test::simple_camera();
        a.id = 0;
        CameraModel b = a;
        b.id = 1;
        b.translation = Vec3(1.0, 0.0, 0.0);  // shifted, same orientation
        two.cameras = {a, b};
        // Same pixel in both: rays are parallel (meet at infinity).
        std::vector<Ray> rays = {{&two.cameras[0], Vec2(960, 600)},
                                 {&two.cameras[1], Vec2(960, 600)}};
        CHECK_THROWS_AS(triangulate(rays), DegenerateGeometryError);
    }
}

TEST_CASE("ransac excludes a 50 px corrupted ray") {
    const CameraRig rig = ring_rig(5, 5.0, 2.5);
    const Vec3 p(0.8, -0.6, 1.4);
    std::vector<Ray> rays;
    for (const auto& cam : rig.cameras) rays.push_back({&cam, project(cam, p)});
    rays[2].pixel += Vec2(50.0, 0.0);

    const RansacResult r = triangulate_ransac(rays, 2.0, 100, 7);
    CHECK(r.inliers.size() == 4);
    CHECK(std::find(r.inliers.begin(), r.inliers.end(), 2) == r.inliers.end());
    CHECK((r.point - p).norm() < 5e-3);

    // Matches plain triangulation on the four clean rays.
    std::vector<Ray> clean = {rays[0], rays[1], rays[3], rays[4]};
    CHECK((r.point - triangulate(clean).point).norm() < 1e-9);
}

TEST_CASE("ransac with exact rays keeps every inlier and matches triangulate") {
    const CameraRig rig = ring_rig(6, 5.0, 2.5);
    const Vec3 p(-0.4, 0.9, 1.1);
    std::vector<Ray> rays;
    for (const auto& cam : rig.cameras) rays.push_back({&cam, project(cam, p)});
    const RansacResult r = triangulate_ransac(rays, 2.0, 100, 3);
    CHECK(r.inliers.size() == rays.size());
    CHECK((r.point - triangulate(rays).point).norm() == 0.0);
}

TEST_CASE("ransac reports no consensus for irreconcilable rays") {
    const CameraRig rig = ring_rig(4, 5.0, 2.0);
    const Vec3 p(0.2, 0.1, 1.0);
    std::vector<Ray> rays = {{&rig.cameras[0], project(rig.cameras[0], p)},
                             {&rig.cameras[1], project(rig.cameras[1], p) + Vec2(100.0, 0.0)}};
    CHECK_THROWS_AS(triangulate_ransac(rays, 2.0, 100, 5), NoConsensusError);
}

TEST_CASE("ransac is deterministic for a fixed seed") {
    const CameraRig rig = ring_rig(6, 5.0, 2.5);
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Vec3 p(0.3, 0.4, 1.2);
    std::vector<Ray> rays;
    for (const auto& cam : rig.cameras)
        rays.push_back({&cam, project(cam, p) + Vec2(gauss(rng), gauss(rng))});
    rays[4].pixel += Vec2(40, -25);

    const RansacResult a = triangulate_ransac(rays, 2.0, 100, 123);
    const RansacResult b = triangulate_ransac(rays, 2.0, 100, 123);
    CHECK(a.point == b.point);
    CHECK(a.inliers == b.inliers);
}

TEST_CASE("bundle adjustment at the optimum changes nothing") {
    const CameraRig rig = ring_rig(8, 6.0, 3.0);
    const auto path = lissajous_path(200, Vec3(0, 0, 1.2), Vec3(2.0, 2.5, 0.8));
    CalibrationProblem problem;
    problem.rig = rig;
    problem.observations = observe_path(rig, path, 0.0, 1);

    const BundleAdjustResult r = bundle_adjust(problem);
    CHECK(r.report.final_rms_px < 1e-8);
    for (size_t i = 0; i < rig.cameras.size(); ++i) {
        CHECK((r.rig.cameras[i].rotation - rig.cameras[i].rotation).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((r.rig.cameras[i].translation - rig.cameras[i].translation).norm() < 1e-8);
        CHECK(std::abs(r.rig.cameras[i].intrinsics(0, 0) - rig.cameras[i].intrinsics(0, 0)) <
              1e-8 * rig.cameras[i].intrinsics(0, 0));
    }
}

TEST_CASE("bundle adjustment recovers a perturbed rig from noiseless observations") {
    const CameraRig truth = ring_rig(8, 6.0, 3.0);
    const auto path = lissajous_path(500, Vec3(0, 0, 1.2), Vec3(2.0, 2.5, 0.8));
    CalibrationProblem problem;
    problem.rig = perturb_rig(truth, 2.0, 0.05, 0.02, 99);
    problem.observations = observe_path(truth, path, 0.0, 2);

    const BundleAdjustResult r = bundle_adjust(problem);
    CHECK(r.report.converged);
    CHECK(r.report.final_rms_px < 1e-3);

    // Monotone residual sequence and orthonormal rotations throughout.
    for (size_t i = 1; i < r.report.residual_history.size(); ++i)
        CHECK(r.report.residual_history[i] <= r.report.residual_history[i - 1] * (1 + 1e-12));
    for (const auto& cam : r.rig.cameras) {
        CHECK((cam.rotation.transpose() * cam.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("bundle adjustment under 0.5 px noise reaches the noise floor") {
    const CameraRig truth = ring_rig(8, 6.0, 3.0);
    const auto path = lissajous_path(500, Vec3(0, 0, 1.2), Vec3(2.0, 2.5, 0.8));
    CalibrationProblem problem;
    problem.rig = perturb_rig(truth, 2.0, 0.05, 0.02, 77);
    problem.observations = observe_path(truth, path, 0.5, 3);

    const BundleAdjustResult r = bundle_adjust(problem);
    CHECK(r.report.converged);
    // Expected rms ~ sigma * sqrt(1 - dof ratio) ~ 0.45 px.
    CHECK(r.report.final_rms_px > 0.3);
    CHECK(r.report.final_rms_px < 0.7);
}

TEST_CASE("bundle adjustment validates its input") {
    CalibrationProblem problem;
    problem.rig = ring_rig(4, 5.0, 2.0);
    problem.observations = {{0, 0, Vec2(100, 100)}};  // single view of frame 0
    CHECK_THROWS_AS(problem.validate(), FormatError);
}

TEST_CASE("align_to_world is the identity on identical sets") {
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0.3, 0.4, 1.0)};
    const WorldAlignment a = align_to_world(pts, pts);
    CHECK(std::abs(a.scale - 1.0) < 1e-10);
    CHECK((a.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(a.translation.norm() < 1e-10);
}

TEST_CASE("align_to_world inverts a known similarity") {
    // Local = world scaled by 2 and shifted by (1,0,0): alignment must
    // recover scale 0.5.
    std::vector<Vec3> world = {Vec3(0, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 1), Vec3(2, 0, 1)};
    std::vector<Vec3> local;
    for (const auto& w : world) local.push_back(2.0 * w + Vec3(1, 0, 0));
    const WorldAlignment a = align_to_world(local, world);
    CHECK(std::abs(a.scale - 0.5) < 1e-9);
    for (size_t i = 0; i < world.size(); ++i)
        CHECK((a.apply(local[i]) - world[i]).norm() < 1e-9);
}

TEST_CASE("align_to_world rejects collinear anchors") {
    std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 2, 3), Vec3(2, 4, 6)};
    CHECK_THROWS_AS(align_to_world(line, line), DegenerateGeometryError);
    std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    CHECK_THROWS_AS(align_to_world(two, two), DegenerateGeometryError);
}

TEST_CASE("align_to_world is exact on noiseless similarity-related sets") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double s = 0.2 + 3.0 * std::abs(uni(rng));
        const Mat3 r =
            Eigen::AngleAxisd(uni(rng) * M_PI, Vec3(uni(rng), uni(rng), uni(rng)).normalized())
                .toRotationMatrix();
        const Vec3 t(uni(rng), uni(rng), uni(rng));
        std::vector<Vec3> local, world;
        for (int i = 0; i < 6; ++i) {
            local.emplace_back(uni(rng), uni(rng), uni(rng));
            world.push_back(s * r * local.back() + t);
        }
        const WorldAlignment a = align_to_world(local, world);
        double worst = 0.0;
        for (size_t i = 0; i < local.size(); ++i)
            worst = std::max(worst, (a.apply(local[i]) - world[i]).norm());
        CHECK(worst < 1e-9);
        CHECK((a.rotation.transpose() * a.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("alignment maps cameras consistently with points") {
    const CameraRig rig = ring_rig(4, 5.0, 2.0);
    std::vector<Vec3> local = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    std::vector<Vec3> world;
    const Mat3 rw = Eigen::AngleAxisd(0.8, Vec3(0.2, -0.5, 1.0).normalized()).toRotationMatrix();
    for (const auto& p : local) world.push_back(1.7 * rw * p + Vec3(3, -2, 0.5));
    const WorldAlignment a = align_to_world(local, world);

    // A world point and its image are preserved under the mapped camera.
    const Vec3 x_local(0.4, 0.2, 1.0);
    for (const auto& cam : rig.cameras) {
        if (cam.depth(x_local) <= 0.0) continue;
        const Vec2 before = project(cam, x_local);
        const Vec2 after = project(a.apply(cam), a.apply(x_local));
        CHECK((before - after).norm() < 1e-6);
    }
}

TEST_CASE("observation file round trip") {
    std::vector<TrackedPoint2D> obs = {{0, 0, Vec2(12.5, 800.25)}, {3, 1, Vec2(0.125, 1.5)}};
    const auto dir = std::filesystem::temp_directory_path() / "mocap_obs_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "obs.json").string();
    save_observations(obs, path);
    const auto back = load_observations(path);
    REQUIRE(back.size() == obs.size());
    for (size_t i = 0; i < obs.size(); ++i) {
        CHECK(back[i].camera_id == obs[i].camera_id);
        CHECK(back[i].frame == obs[i].frame);
        CHECK((back[i].pixel - obs[i].pixel).norm() == 0.0);
    }
    std::filesystem::remove_all(dir);
}
