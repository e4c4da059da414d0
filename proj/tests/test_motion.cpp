#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mocap/motion.hpp"
#include "test_util.hpp"

#include <random>

using namespace mocap;

namespace {

MotionSequence random_sequence(int frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    MotionSequence seq;
    seq.person_id = 3;
    seq.frame_rate = 60.0;
    seq.viewpoint_count = 4;
    for (int f = 0; f < frames; ++f) {
        FramePose fp;
        fp.frame = f + 10;
        fp.q = JointAngles::Zero(kDofCount);
        for (int d = 0; d < kDofCount; ++d) fp.q[d] = uni(rng);
        fp.positions.resize(kJointCount, 3);
        for (int j = 0; j < kJointCount; ++j)
            fp.positions.row(j) = Eigen::RowVector3d(uni(rng), uni(rng), uni(rng));
        for (int k = 0; k < kKeypointCount; ++k) fp.weights[k] = std::abs(uni(rng));
        fp.cameras = {0, -1, 5, 2};
        fp.lost = f == 2;
        seq.frames.push_back(fp);
    }
    return seq;
}

}  // namespace

TEST_CASE("motion text round trip is exact and byte-stable") {
    const MotionSequence seq = random_sequence(5, 77);
    const std::string text = motion_to_text(seq);
    const MotionSequence back = motion_from_text(text);

    CHECK(back.person_id == seq.person_id);
    CHECK(back.frame_rate == seq.frame_rate);
    CHECK(back.viewpoint_count == seq.viewpoint_count);
    REQUIRE(back.frames.size() == seq.frames.size());
    for (size_t f = 0; f < seq.frames.size(); ++f) {
        CHECK(back.frames[f].frame == seq.frames[f].frame);
        CHECK((back.frames[f].q - seq.frames[f].q).norm() == 0.0);
        CHECK((back.frames[f].positions - seq.frames[f].positions).norm() == 0.0);
        CHECK(back.frames[f].weights == seq.frames[f].weights);
        CHECK(back.frames[f].cameras == seq.frames[f].cameras);
        CHECK(back.frames[f].lost == seq.frames[f].lost);
    }
    // Serializing the parsed sequence reproduces the bytes.
    CHECK(motion_to_text(back) == text);
}

TEST_CASE("at_frame resolves frames and rejects out-of-range lookups") {
    const MotionSequence seq = random_sequence(4, 3);
    CHECK(seq.start_frame() == 10);
    CHECK(seq.end_frame() == 13);
    CHECK(seq.at_frame(12).frame == 12);
    CHECK_THROWS_AS(seq.at_frame(14), LookupError);
    CHECK_THROWS_AS(seq.at_frame(9), LookupError);
}

TEST_CASE("malformed motion text is rejected") {
    CHECK_THROWS_AS(motion_from_text("1 2 3\n"), FormatError);
    const MotionSequence seq = random_sequence(2, 5);
    std::string text = motion_to_text(seq);
    // Truncate the last row.
    text.resize(text.size() - 40);
    text += "\n";
    CHECK_THROWS_AS(motion_from_text(text), FormatError);
}
