#include "mocap/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace mocap {

using nlohmann::json;

void EvalPair::validate() const {
    if (!predicted || !truth) throw EmptyRangeError("evaluation pair is incomplete");
    if (joints.empty()) throw EmptyRangeError("no joints selected for evaluation");
    for (const auto& [jp, jt] : joints) {
        if (jp < 0 || jt < 0) throw LookupError("negative joint index in correspondence");
    }
    for (const auto& [a, b] : limbs)
        if (a < 0 || a >= static_cast<int>(joints.size()) || b < 0 ||
            b >= static_cast<int>(joints.size()))
            throw LookupError("limb references unknown correspondence entry");
}

std::pair<int, int> EvalPair::common_range() const {
    validate();
    const int first = std::max(predicted->start_frame(), truth->start_frame());
    const int last = std::min(predicted->end_frame(), truth->end_frame());
    if (first > last) throw EmptyRangeError("sequences share no frames");
    return {first, last};
}

EvalPair body_eval_pair(const MotionSequence& predicted, const MotionSequence& truth,
                        const SkeletonModel& model) {
    EvalPair pair;
    pair.predicted = &predicted;
    pair.truth = &truth;
    // Body keypoints 5..16: shoulders, elbows, wrists, hips, knees, ankles.
    for (int k = 5; k < kKeypointCount; ++k) {
        const int j = model.keypoint_map[k];
        pair.joints.emplace_back(j, j);
    }
    auto at = [&](int keypoint) { return keypoint - 5; };
    // Upper arm, forearm, thigh, shank per side.
    pair.limbs = {{at(5), at(7)},   {at(7), at(9)},   {at(6), at(8)},   {at(8), at(10)},
                  {at(11), at(13)}, {at(13), at(15)}, {at(12), at(14)}, {at(14), at(16)}};
    return pair;
}

namespace {

std::vector<int> frames_in_range(const EvalPair& pair,
                                 const std::optional<std::pair<int, int>>& range) {
    const auto [lo, hi] = range ? *range : pair.common_range();
    if (lo > hi) throw EmptyRangeError("empty frame range");
    const auto full = pair.common_range();
    std::vector<int> frames;
    for (int f = std::max(lo, full.first); f <= std::min(hi, full.second); ++f)
        frames.push_back(f);
    if (frames.empty()) throw EmptyRangeError("requested range does not overlap the sequences");
    return frames;
}

double frame_mpjpe_mm(const EvalPair& pair, int frame) {
    const FramePose& p = pair.predicted->at_frame(frame);
    const FramePose& t = pair.truth->at_frame(frame);
    double acc = 0.0;
    for (const auto& [jp, jt] : pair.joints)
        acc += (p.positions.row(jp) - t.positions.row(jt)).norm();
    return 1000.0 * acc / static_cast<double>(pair.joints.size());
}

double mpjpe_over(const EvalPair& pair, const std::vector<int>& frames) {
    double acc = 0.0;
    for (int f : frames) acc += frame_mpjpe_mm(pair, f);
    return acc / static_cast<double>(frames.size());
}

enum class PcpKind { Endpoint, Midpoint };

double pcp_over(const EvalPair& pair, const std::vector<int>& frames, PcpKind kind) {
    if (pair.limbs.empty()) throw EmptyRangeError("no limbs selected");
    long correct = 0, total = 0;
    for (int f : frames) {
        const FramePose& p = pair.predicted->at_frame(f);
        const FramePose& t = pair.truth->at_frame(f);
        for (const auto& [ia, ib] : pair.limbs) {
            const auto& [pa, ta] = pair.joints[ia];
            const auto& [pb, tb] = pair.joints[ib];
            const Vec3 ta_pos = t.positions.row(ta).transpose();
            const Vec3 tb_pos = t.positions.row(tb).transpose();
            const double limb_len = (ta_pos - tb_pos).norm();
            if (limb_len <= 0.0)
                throw DegenerateGeometryError("zero-length true limb in PCP evaluation");
            const Vec3 pa_pos = p.positions.row(pa).transpose();
            const Vec3 pb_pos = p.positions.row(pb).transpose();
            bool ok;
            if (kind == PcpKind::Endpoint) {
                ok = (pa_pos - ta_pos).norm() < 0.5 * limb_len &&
                     (pb_pos - tb_pos).norm() < 0.5 * limb_len;
            } else {
                ok = (0.5 * (pa_pos + pb_pos) - 0.5 * (ta_pos + tb_pos)).norm() < 0.5 * limb_len;
            }
            correct += ok ? 1 : 0;
            ++total;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double pck_over(const EvalPair& pair, const std::vector<int>& frames, double threshold_mm) {
    long correct = 0, total = 0;
    for (int f : frames) {
        const FramePose& p = pair.predicted->at_frame(f);
        const FramePose& t = pair.truth->at_frame(f);
        for (const auto& [jp, jt] : pair.joints) {
            const double d_mm = 1000.0 * (p.positions.row(jp) - t.positions.row(jt)).norm();
            correct += d_mm <= threshold_mm ? 1 : 0;
            ++total;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

double mpjpe_mm(const EvalPair& pair, std::optional<std::pair<int, int>> range) {
    return mpjpe_over(pair, frames_in_range(pair, range));
}

std::vector<std::pair<int, double>> per_frame_mpjpe_mm(const EvalPair& pair) {
    std::vector<std::pair<int, double>> out;
    for (int f : frames_in_range(pair, std::nullopt)) out.emplace_back(f, frame_mpjpe_mm(pair, f));
    return out;
}

double pcp_endpoint(const EvalPair& pair, std::optional<std::pair<int, int>> range) {
    return pcp_over(pair, frames_in_range(pair, range), PcpKind::Endpoint);
}

double pcp_midpoint(const EvalPair& pair, std::optional<std::pair<int, int>> range) {
    return pcp_over(pair, frames_in_range(pair, range), PcpKind::Midpoint);
}

double pck(const EvalPair& pair, double threshold_mm, std::optional<std::pair<int, int>> range) {
    if (threshold_mm <= 0.0) throw IllPosedError("PCK threshold must be positive");
    return pck_over(pair, frames_in_range(pair, range), threshold_mm);
}

std::vector<int> successful_frames(const EvalPair& pair, double threshold_mm) {
    std::vector<int> out;
    for (int f : frames_in_range(pair, std::nullopt))
        if (frame_mpjpe_mm(pair, f) <= threshold_mm) out.push_back(f);  // inclusive: "or less"
    return out;
}

double success_rate(const EvalPair& pair, double threshold_mm) {
    const auto frames = frames_in_range(pair, std::nullopt);
    return 100.0 * static_cast<double>(successful_frames(pair, threshold_mm).size()) /
           static_cast<double>(frames.size());
}

MetricsReport evaluate(const EvalPair& pair, double success_threshold_mm) {
    MetricsReport r;
    const auto all = frames_in_range(pair, std::nullopt);
    const auto good = successful_frames(pair, success_threshold_mm);
    r.frames = static_cast<int>(all.size());
    r.successful = static_cast<int>(good.size());
    r.success_rate_pct = 100.0 * static_cast<double>(good.size()) / all.size();
    if (!good.empty()) {
        r.mpjpe_mm = mpjpe_over(pair, good);
        if (!pair.limbs.empty()) {
            r.pcp_endpoint_pct = pcp_over(pair, good, PcpKind::Endpoint);
            r.pcp_midpoint_pct = pcp_over(pair, good, PcpKind::Midpoint);
        }
        r.pck50_pct = pck_over(pair, good, 50.0);
        r.pck100_pct = pck_over(pair, good, 100.0);
    }
    return r;
}

namespace {

json report_json(const MetricsReport& r) {
    json j;
    j["success_rate"] = r.success_rate_pct;
    j["mpjpe_mm"] = r.mpjpe_mm;
    j["pcp_endpoint"] = r.pcp_endpoint_pct;
    j["pcp_midpoint"] = r.pcp_midpoint_pct;
    j["pck50"] = r.pck50_pct;
    j["pck100"] = r.pck100_pct;
    j["frames"] = r.frames;
    j["successful_frames"] = r.successful;
    return j;
}

}  // namespace

std::string metrics_report_to_json(const std::vector<MetricsReport>& per_person,
                                   const MetricsReport& aggregate) {
    json j;
    j["format"] = "mocap-metrics";
    j["note"] = "all metrics except success_rate are computed over successful frames only";
    j["actors"] = json::array();
    for (const auto& r : per_person) j["actors"].push_back(report_json(r));
    j["aggregate"] = report_json(aggregate);
    return j.dump(2) + "\n";
}

}  // namespace mocap
