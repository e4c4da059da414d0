#include "mocap/init.hpp"

#include "rng_util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace mocap {

using nlohmann::json;

namespace {

// COCO keypoint indices used by the placement rules.
constexpr int kNose = 0, kLEar = 3, kREar = 4, kLShoulder = 5, kRShoulder = 6;
constexpr int kLHip = 11, kRHip = 12, kLKnee = 13, kRKnee = 14, kLAnkle = 15, kRAnkle = 16;

/// Trunk-chain fraction of a joint in the template rest pose: position of
/// the joint projected onto the pelvis->neck axis, as a fraction of the
/// trunk length. Exact for joints on the trunk line.
double trunk_fraction(const JointPositions& rest, int joint, int pelvis, int neck) {
    const Vec3 axis = rest.row(neck) - rest.row(pelvis);
    return (rest.row(joint) - rest.row(pelvis)).dot(axis) / axis.squaredNorm();
}

}  // namespace

InitResult initialize_person(const std::vector<InitObservation>& observations,
                             const CameraRig& rig, const SkeletonModel& template_model,
                             const InitConfig& cfg) {
    // Triangulate every keypoint from the confident views.
    std::array<Vec3, kKeypointCount> kp{};
    std::vector<int> missing;
    for (int k = 0; k < kKeypointCount; ++k) {
        std::vector<Ray> rays;
        for (const auto& o : observations)
            if (o.confidences[k] >= cfg.confidence_threshold)
                rays.push_back({&rig.cameras[o.camera], o.pixels[k]});
        if (rays.size() < 2) {
            missing.push_back(k);
            continue;
        }
        kp[k] = triangulate_ransac(rays, cfg.ransac_threshold_px, cfg.ransac_iterations,
                                   detail::stream_seed(cfg.seed, k))
                    .point;
    }
    if (!missing.empty()) {
        std::string names;
        for (int k : missing) names += " " + std::to_string(k);
        throw InitializationError("keypoints with fewer than 2 confident views:" + names,
                                  missing);
    }

    const JointAngles zero = JointAngles::Zero(kDofCount);
    const JointPositions rest = forward_kinematics(template_model, zero);
    const int j_pelvis = template_model.joint_index("pelvis");
    const int j_neck = template_model.neck_joint();
    const int j_spine = template_model.joint_index("spine");
    const int j_chest = template_model.joint_index("chest");
    const int j_torso = template_model.torso_joint();
    const int j_head = template_model.joint_index("head");

    // Straight-trunk / rest-scapula placement of the joints that own no
    // keypoint; the coefficients are measured on the template so the rules
    // are exact for a template-shaped subject in the rest pose.
    std::map<int, Vec3> derived;
    for (int k = 0; k < kKeypointCount; ++k) derived[template_model.keypoint_map[k]] = kp[k];

    const Vec3 pelvis_d = 0.5 * (kp[kLHip] + kp[kRHip]);
    const Vec3 neck_d = 0.5 * (kp[kLShoulder] + kp[kRShoulder]);
    const Vec3 trunk = neck_d - pelvis_d;
    derived[j_pelvis] = pelvis_d;
    derived[j_neck] = neck_d;
    derived[j_spine] = pelvis_d + trunk_fraction(rest, j_spine, j_pelvis, j_neck) * trunk;
    derived[j_chest] = pelvis_d + trunk_fraction(rest, j_chest, j_pelvis, j_neck) * trunk;
    derived[j_torso] = pelvis_d + trunk_fraction(rest, j_torso, j_pelvis, j_neck) * trunk;

    {   // Head along the neck -> ear-midpoint direction.
        const Vec3 v_t = 0.5 * (rest.row(template_model.keypoint_map[kLEar]) +
                                rest.row(template_model.keypoint_map[kREar]))
                             .transpose() -
                         rest.row(j_neck).transpose();
        const Vec3 h_t = rest.row(j_head).transpose() - rest.row(j_neck).transpose();
        const double lambda = h_t.dot(v_t) / v_t.squaredNorm();
        const Vec3 ear_mid = 0.5 * (kp[kLEar] + kp[kREar]);
        derived[j_head] = neck_d + lambda * (ear_mid - neck_d);
    }

    for (const char* side : {"l", "r"}) {
        const int j_clav = template_model.joint_index(std::string(side) + "_clavicle");
        const int shoulder_kp = side[0] == 'l' ? kLShoulder : kRShoulder;
        // Template-frame decomposition of the clavicle offset in the
        // (chest->neck, neck->shoulder) basis (orthogonal in the template).
        const Vec3 u1_t = rest.row(j_neck).transpose() - rest.row(j_chest).transpose();
        const Vec3 u2_t =
            rest.row(template_model.keypoint_map[shoulder_kp]).transpose() -
            rest.row(j_neck).transpose();
        const Vec3 c_t = rest.row(j_clav).transpose() - rest.row(j_chest).transpose();
        const double a = c_t.dot(u1_t) / u1_t.squaredNorm();
        const double b = c_t.dot(u2_t) / u2_t.squaredNorm();
        derived[j_clav] =
            derived[j_chest] + a * (neck_d - derived[j_chest]) + b * (kp[shoulder_kp] - neck_d);
    }

    // Stature along the neck-to-ankle chain, on the template and measured.
    auto chain_length = [&](const Vec3& neck_p, const Vec3& pelvis_p,
                            const std::array<Vec3, kKeypointCount>& pts) {
        const double thigh = 0.5 * ((pts[kLHip] - pts[kLKnee]).norm() +
                                    (pts[kRHip] - pts[kRKnee]).norm());
        const double shank = 0.5 * ((pts[kLKnee] - pts[kLAnkle]).norm() +
                                    (pts[kRKnee] - pts[kRAnkle]).norm());
        return (neck_p - pelvis_p).norm() + thigh + shank;
    };
    std::array<Vec3, kKeypointCount> rest_kp{};
    for (int k = 0; k < kKeypointCount; ++k)
        rest_kp[k] = rest.row(template_model.keypoint_map[k]).transpose();
    const double stature_t = chain_length(rest.row(j_neck).transpose(),
                                          rest.row(j_pelvis).transpose(), rest_kp);
    const double stature = chain_length(neck_d, pelvis_d, kp);

    // Link lengths: measured where both endpoints are placed, otherwise
    // template ratio times the stature.
    std::vector<double> lengths(kJointCount, 0.0);
    for (int j = 0; j < kJointCount; ++j) {
        const int parent = template_model.joints[j].parent;
        if (parent < 0) continue;
        if (derived.count(j) && derived.count(parent)) {
            lengths[j] = (derived.at(j) - derived.at(parent)).norm();
        } else {
            lengths[j] = template_model.link_length(j) / stature_t * stature;
        }
    }
    // Left/right pairs averaged to equality (the same double on both sides).
    for (const auto& [l, r] : template_model.symmetric_pairs()) {
        const double mean = 0.5 * (lengths[l] + lengths[r]);
        lengths[l] = mean;
        lengths[r] = mean;
    }
    // Scale the template offsets; mirrored directions get the identical
    // factor, keeping left/right norms bitwise equal.
    InitResult result;
    result.model = template_model;
    for (int j = 0; j < kJointCount; ++j) {
        if (template_model.joints[j].parent < 0) continue;
        result.model.joints[j].offset =
            template_model.joints[j].offset * (lengths[j] / template_model.link_length(j));
    }
    result.model.finalize();

    // Initial pose guess: pelvis position plus the yaw of the hip line,
    // then a RoM-constrained fit to the triangulated keypoints.
    JointAngles q0 = JointAngles::Zero(kDofCount);
    const int rq = result.model.joints[result.model.traversal.front()].q_index;
    q0.segment<3>(rq) = pelvis_d;
    const Vec3 hip_dir = kp[kLHip] - kp[kRHip];
    if (hip_dir.head<2>().norm() > 1e-9) q0[rq + 5] = std::atan2(hip_dir.y(), hip_dir.x());

    IkTargets targets{};
    for (int k = 0; k < kKeypointCount; ++k) {
        targets[k].position = kp[k];
        targets[k].weight = 1.0;
        targets[k].active = true;
    }
    const IkResult fit = solve_constrained(result.model, q0, targets, cfg.ik);
    result.q = fit.q;
    result.positions = fit.positions;
    result.keypoints3d = kp;
    return result;
}

std::vector<InitObservation> observations_from_pcm(const PcmSet& pcm, const CameraRig& rig,
                                                   int person) {
    std::vector<InitObservation> out;
    for (int c = 0; c < static_cast<int>(rig.cameras.size()); ++c) {
        InitObservation o;
        o.camera = c;
        bool any = false;
        for (int k = 0; k < kKeypointCount; ++k) {
            if (const auto p = pcm.peak(c, person, k)) {
                o.pixels[k] = p->pixel;
                o.confidences[k] = p->confidence;
                any = true;
            }
        }
        if (any) out.push_back(o);
    }
    return out;
}

std::vector<ManualBox> bootstrap_boxes(const std::vector<ManualBox>& manual) { return manual; }

namespace {

Mat3 fundamental_matrix(const CameraModel& a, const CameraModel& b) {
    const Mat3 r_rel = b.rotation * a.rotation.transpose();
    const Vec3 t_rel = b.translation - r_rel * a.translation;
    Mat3 tx;
    tx << 0, -t_rel.z(), t_rel.y(), t_rel.z(), 0, -t_rel.x(), -t_rel.y(), t_rel.x(), 0;
    return b.intrinsics.inverse().transpose() * tx * r_rel * a.intrinsics.inverse();
}

double epipolar_distance(const Mat3& f, const Vec2& xa, const Vec2& xb) {
    const Vec3 la = f * Vec3(xa.x(), xa.y(), 1.0);             // line in image b
    const Vec3 lb = f.transpose() * Vec3(xb.x(), xb.y(), 1.0);  // line in image a
    const double num = std::abs(Vec3(xb.x(), xb.y(), 1.0).dot(f * Vec3(xa.x(), xa.y(), 1.0)));
    const double da = num / std::max(1e-12, la.head<2>().norm());
    const double db = num / std::max(1e-12, lb.head<2>().norm());
    return 0.5 * (da + db);
}

}  // namespace

BootstrapResult bootstrap_from_detections(const std::vector<DetectionSet>& sets,
                                          const CameraRig& rig, double epipolar_threshold_px,
                                          double confidence_threshold) {
    if (sets.empty()) throw IllPosedError("no detection sets");
    const DetectionSet& ref = sets.front();
    BootstrapResult out;

    std::vector<std::set<int>> claimed(sets.size());
    for (int d0 = 0; d0 < static_cast<int>(ref.detections.size()); ++d0) {
        std::vector<int> assign(sets.size(), -1);
        assign[0] = d0;
        for (size_t s = 1; s < sets.size(); ++s) {
            const Mat3 f =
                fundamental_matrix(rig.cameras[ref.camera], rig.cameras[sets[s].camera]);
            double best = std::numeric_limits<double>::infinity();
            double second = std::numeric_limits<double>::infinity();
            int best_idx = -1;
            for (int d = 0; d < static_cast<int>(sets[s].detections.size()); ++d) {
                double acc = 0.0;
                int n = 0;
                for (int k = 0; k < kKeypointCount; ++k) {
                    if (ref.detections[d0].confidences[k] < confidence_threshold ||
                        sets[s].detections[d].confidences[k] < confidence_threshold)
                        continue;
                    acc += epipolar_distance(f, ref.detections[d0].pixels[k],
                                             sets[s].detections[d].pixels[k]);
                    ++n;
                }
                if (n == 0) continue;
                const double mean = acc / n;
                if (mean < best) {
                    second = best;
                    best = mean;
                    best_idx = d;
                } else if (mean < second) {
                    second = mean;
                }
            }
            if (best_idx < 0 || best > epipolar_threshold_px) continue;
            if (second == best)
                throw AmbiguousIdentityError(
                    "detections tie at epipolar residual " + std::to_string(best) +
                    " px in camera set " + std::to_string(s));
            if (claimed[s].count(best_idx))
                throw AmbiguousIdentityError("detection " + std::to_string(best_idx) +
                                             " in camera set " + std::to_string(s) +
                                             " matches two persons");
            claimed[s].insert(best_idx);
            assign[s] = best_idx;
        }
        out.assignment.push_back(assign);
    }

    // Boxes from the matched detections' keypoint extents.
    for (int p = 0; p < static_cast<int>(out.assignment.size()); ++p) {
        for (size_t s = 0; s < sets.size(); ++s) {
            const int d = out.assignment[p][s];
            if (d < 0) continue;
            const Detection& det = sets[s].detections[d];
            double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
            bool first = true;
            for (int k = 0; k < kKeypointCount; ++k) {
                if (det.confidences[k] < confidence_threshold) continue;
                if (first) {
                    min_x = max_x = det.pixels[k].x();
                    min_y = max_y = det.pixels[k].y();
                    first = false;
                } else {
                    min_x = std::min(min_x, det.pixels[k].x());
                    max_x = std::max(max_x, det.pixels[k].x());
                    min_y = std::min(min_y, det.pixels[k].y());
                    max_y = std::max(max_y, det.pixels[k].y());
                }
            }
            if (first) continue;
            ManualBox box;
            box.person = p;
            box.camera = sets[s].camera;
            box.center = Vec2((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
            box.size = Vec2(1.25 * (max_x - min_x), 1.25 * (max_y - min_y));
            out.boxes.push_back(box);
        }
    }
    return out;
}

std::vector<ManualBox> load_manual_boxes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open box file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("box file parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-boxes") throw FormatError("not a mocap-boxes file");
    std::vector<ManualBox> out;
    for (const auto& e : j.at("boxes")) {
        ManualBox b;
        b.person = e.at("person").get<int>();
        b.camera = e.at("camera").get<int>();
        b.center = Vec2(e.at("center").at(0).get<double>(), e.at("center").at(1).get<double>());
        b.size = Vec2(e.at("size").at(0).get<double>(), e.at("size").at(1).get<double>());
        out.push_back(b);
    }
    return out;
}

void save_manual_boxes(const std::vector<ManualBox>& boxes, const std::string& path) {
    json j;
    j["format"] = "mocap-boxes";
    j["boxes"] = json::array();
    for (const auto& b : boxes) {
        json e;
        e["person"] = b.person;
        e["camera"] = b.camera;
        e["center"] = {b.center.x(), b.center.y()};
        e["size"] = {b.size.x(), b.size.y()};
        j["boxes"].push_back(e);
    }
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write box file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mocap
