#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mocap/init.hpp"
#include "mocap/metrics.hpp"
#include "mocap/scene.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <random>

using namespace mocap;

namespace {

std::vector<InitObservation> observations_from_keypoints(
    const std::array<Vec3, kKeypointCount>& kp, const CameraRig& rig) {
    std::vector<InitObservation> obs;
    for (int c = 0; c < static_cast<int>(rig.cameras.size()); ++c) {
        InitObservation o;
        o.camera = c;
        bool any = false;
        for (int k = 0; k < kKeypointCount; ++k) {
            if (!is_visible(rig.cameras[c], kp[k])) continue;
            o.pixels[k] = project(rig.cameras[c], kp[k]);
            o.confidences[k] = 1.0;
            any = true;
        }
        if (any) obs.push_back(o);
    }
    return obs;
}

std::array<Vec3, kKeypointCount> keypoints_of(const SkeletonModel& model,
                                              const JointPositions& pos) {
    std::array<Vec3, kKeypointCount> kp{};
    for (int k = 0; k < kKeypointCount; ++k) kp[k] = pos.row(model.keypoint_map[k]).transpose();
    return kp;
}

}  // namespace

TEST_CASE("synthetic round trip recovers link lengths and the initial pose") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    SceneConfig scene;
    scene.persons = 2;
    scene.duration_s = 0.2;
    scene.seed = 21;
    const GroundTruthScene gt = generate_ground_truth(scene, skeleton, rig);
    const SyntheticSceneConfig pcm_cfg = synthetic_pcm_config(scene, rig, skeleton, gt);
    const PcmSet pcm0 = generate_synthetic(pcm_cfg, 0);

    for (int p = 0; p < scene.persons; ++p) {
        const auto obs = observations_from_pcm(pcm0, rig, p);
        const InitResult r = initialize_person(obs, rig, skeleton);

        // Ground-truth person models carry scaled lengths; recovery must be
        // exact for noiseless projections.
        for (int j = 0; j < kJointCount; ++j) {
            if (skeleton.joints[j].parent < 0) continue;
            CHECK(std::abs(r.model.link_length(j) - gt.models[p].link_length(j)) < 1e-6);
        }

        // Full-skeleton MPJPE of the fitted initial pose.
        const auto& truth = gt.sequences[p].at_frame(0);
        double acc = 0.0;
        for (int j = 0; j < kJointCount; ++j)
            acc += (r.positions.row(j) - truth.positions.row(j)).norm();
        CHECK(acc / kJointCount < 1e-3);

        // FK consistency of the returned state.
        const JointPositions re = forward_kinematics(r.model, r.q);
        CHECK((re - r.positions).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(rom_satisfied(r.model, r.q));
    }
}

TEST_CASE("asymmetric measured lengths average to equality") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    const JointPositions rest = forward_kinematics(skeleton, JointAngles::Zero(kDofCount));

    // Keypoints of a standing subject 1 m above the floor with the left
    // knee pulled 20 mm up: left thigh 0.40 m, right 0.42 m.
    JointPositions pos = rest;
    for (int j = 0; j < kJointCount; ++j) pos(j, 2) += 1.0;
    const int l_knee = skeleton.joint_index("l_knee");
    pos(l_knee, 2) += 0.02;
    auto kp = keypoints_of(skeleton, pos);
    // Keep the shank length intact by lifting the ankle/toe chain too.
    kp[15].z() += 0.02;  // l_ankle

    const auto obs = observations_from_keypoints(kp, rig);
    const InitResult r = initialize_person(obs, rig, skeleton);

    const double lt = r.model.link_length(skeleton.joint_index("l_knee"));
    const double rt = r.model.link_length(skeleton.joint_index("r_knee"));
    CHECK(lt == doctest::Approx(0.41).epsilon(1e-6));
    CHECK(rt == doctest::Approx(0.41).epsilon(1e-6));

    // Every left/right pair is exactly equal after initialization.
    for (const auto& [l, rj] : r.model.symmetric_pairs())
        CHECK(r.model.link_length(l) == r.model.link_length(rj));
}

TEST_CASE("a keypoint below two confident views fails initialization naming it") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    JointPositions pos = forward_kinematics(skeleton, JointAngles::Zero(kDofCount));
    for (int j = 0; j < kJointCount; ++j) pos(j, 2) += 1.0;
    const auto kp = keypoints_of(skeleton, pos);
    auto obs = observations_from_keypoints(kp, rig);

    // Erase the left wrist (keypoint 9) everywhere but one camera.
    for (size_t i = 1; i < obs.size(); ++i) obs[i].confidences[9] = 0.0;
    try {
        initialize_person(obs, rig, skeleton);
        FAIL("expected InitializationError");
    } catch (const InitializationError& e) {
        REQUIRE(e.missing_keypoints().size() == 1);
        CHECK(e.missing_keypoints()[0] == 9);
    }
}

TEST_CASE("low-confidence observations are treated as missing") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    JointPositions pos = forward_kinematics(skeleton, JointAngles::Zero(kDofCount));
    for (int j = 0; j < kJointCount; ++j) pos(j, 2) += 1.0;
    auto obs = observations_from_keypoints(keypoints_of(skeleton, pos), rig);
    for (auto& o : obs) o.confidences[3] = 0.1;  // l_ear below the 0.3 threshold
    CHECK_THROWS_AS(initialize_person(obs, rig, skeleton), InitializationError);
}

TEST_CASE("re-initialization from reprojected output is idempotent") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    SceneConfig scene;
    scene.persons = 1;
    scene.duration_s = 0.2;
    scene.seed = 3;
    const GroundTruthScene gt = generate_ground_truth(scene, skeleton, rig);
    const SyntheticSceneConfig pcm_cfg = synthetic_pcm_config(scene, rig, skeleton, gt);
    const PcmSet pcm0 = generate_synthetic(pcm_cfg, 0);

    const auto obs = observations_from_pcm(pcm0, rig, 0);
    const InitResult first = initialize_person(obs, rig, skeleton);

    const auto obs2 =
        observations_from_keypoints(keypoints_of(first.model, first.positions), rig);
    const InitResult second = initialize_person(obs2, rig, skeleton);
    for (int j = 0; j < kJointCount; ++j) {
        if (skeleton.joints[j].parent < 0) continue;
        CHECK(std::abs(first.model.link_length(j) - second.model.link_length(j)) < 1e-9);
    }
}

TEST_CASE("bootstrap boxes pass manual boxes through") {
    std::vector<ManualBox> manual = {{0, 2, Vec2(100, 200), Vec2(50, 80)},
                                     {1, 0, Vec2(700, 300), Vec2(90, 160)}};
    const auto out = bootstrap_boxes(manual);
    REQUIRE(out.size() == manual.size());
    for (size_t i = 0; i < manual.size(); ++i) {
        CHECK(out[i].person == manual[i].person);
        CHECK(out[i].camera == manual[i].camera);
        CHECK((out[i].center - manual[i].center).norm() == 0.0);
        CHECK((out[i].size - manual[i].size).norm() == 0.0);
    }
}

TEST_CASE("epipolar matching groups two persons across views") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();

    // Two persons two meters apart.
    auto person_kp = [&](double x) {
        JointPositions pos = forward_kinematics(skeleton, JointAngles::Zero(kDofCount));
        for (int j = 0; j < kJointCount; ++j) {
            pos(j, 0) += x;
            pos(j, 2) += 1.0;
        }
        return keypoints_of(skeleton, pos);
    };
    const auto kp_a = person_kp(-1.0);
    const auto kp_b = person_kp(1.0);

    auto detection_of = [&](const std::array<Vec3, kKeypointCount>& kp, int cam) {
        Detection d;
        for (int k = 0; k < kKeypointCount; ++k) {
            if (!is_visible(rig.cameras[cam], kp[k])) continue;
            d.pixels[k] = project(rig.cameras[cam], kp[k]);
            d.confidences[k] = 1.0;
        }
        return d;
    };

    std::vector<DetectionSet> sets;
    for (int cam : {0, 2, 4}) {
        DetectionSet s;
        s.camera = cam;
        if (cam == 2) {
            s.detections = {detection_of(kp_b, cam), detection_of(kp_a, cam)};  // shuffled
        } else {
            s.detections = {detection_of(kp_a, cam), detection_of(kp_b, cam)};
        }
        sets.push_back(s);
    }

    const BootstrapResult r = bootstrap_from_detections(sets, rig, 5.0);
    REQUIRE(r.assignment.size() == 2);
    CHECK(r.assignment[0] == std::vector<int>{0, 1, 0});
    CHECK(r.assignment[1] == std::vector<int>{1, 0, 1});
    CHECK_FALSE(r.boxes.empty());
}

TEST_CASE("identical epipolar residuals raise an ambiguity error") {
    const SkeletonModel skeleton = test::default_skeleton();
    const CameraRig rig = make_studio_rig();
    JointPositions pos = forward_kinematics(skeleton, JointAngles::Zero(kDofCount));
    for (int j = 0; j < kJointCount; ++j) pos(j, 2) += 1.0;
    const auto kp = keypoints_of(skeleton, pos);

    auto detection_of = [&](int cam) {
        Detection d;
        for (int k = 0; k < kKeypointCount; ++k) {
            if (!is_visible(rig.cameras[cam], kp[k])) continue;
            d.pixels[k] = project(rig.cameras[cam], kp[k]);
            d.confidences[k] = 1.0;
        }
        return d;
    };

    // The second camera carries the same detection twice: both candidates
    // match the reference equally well.
    std::vector<DetectionSet> sets(2);
    sets[0].camera = 0;
    sets[0].detections = {detection_of(0)};
    sets[1].camera = 2;
    sets[1].detections = {detection_of(2), detection_of(2)};
    CHECK_THROWS_AS(bootstrap_from_detections(sets, rig, 5.0), AmbiguousIdentityError);
}

TEST_CASE("manual box file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mocap_boxes";
    std::filesystem::create_directories(dir);
    std::vector<ManualBox> boxes = {{0, 1, Vec2(10.5, 20.25), Vec2(30, 40)}};
    save_manual_boxes(boxes, (dir / "b.json").string());
    const auto back = load_manual_boxes((dir / "b.json").string());
    REQUIRE(back.size() == 1);
    CHECK(back[0].person == 0);
    CHECK(back[0].camera == 1);
    CHECK((back[0].center - boxes[0].center).norm() == 0.0);
    std::filesystem::remove_all(dir);
}
