#include "mocap/skeleton.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mocap {

using nlohmann::json;

namespace {

constexpr int kSupportedVersion = 1;

Mat3 rot_x(double a) {
    Mat3 m;
    m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return m;
}

Mat3 rot_y(double a) {
    Mat3 m;
    m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return m;
}

Mat3 rot_z(double a) {
    Mat3 m;
    m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return m;
}

Mat3 axis_rotation(const Vec3& axis, double a) {
    return Eigen::AngleAxisd(a, axis).toRotationMatrix();
}

const char* dof_name(DofType t) {
    switch (t) {
        case DofType::Root6: return "root6";
        case DofType::EulerXYZ: return "euler_xyz";
        case DofType::Hinge: return "hinge";
        case DofType::Fixed: return "fixed";
    }
    return "?";
}

DofType dof_from_name(const std::string& s) {
    if (s == "root6") return DofType::Root6;
    if (s == "euler_xyz") return DofType::EulerXYZ;
    if (s == "hinge") return DofType::Hinge;
    if (s == "fixed") return DofType::Fixed;
    throw FormatError("unknown dof type: " + s);
}

// COCO keypoint order; positions in this list are the keypoint indices.
const std::array<const char*, kKeypointCount> kKeypointNames = {
    "nose",    "l_eye",      "r_eye",   "l_ear",   "r_ear",   "l_shoulder",
    "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hip",
    "r_hip",   "l_knee",     "r_knee",  "l_ankle", "r_ankle"};

}  // namespace

int Joint::dof_total() const {
    switch (type) {
        case DofType::Root6: return 6;
        case DofType::EulerXYZ: return 3;
        case DofType::Hinge: return 1;
        case DofType::Fixed: return 0;
    }
    return 0;
}

int Joint::rotational_dof() const {
    return type == DofType::Root6 ? 3 : dof_total();
}

int SkeletonModel::joint_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(joints.size()); ++i)
        if (joints[i].name == name) return i;
    throw LookupError("no joint named " + name);
}

void SkeletonModel::set_link_length(int joint, double length) {
    Joint& j = joints[joint];
    const double old = j.offset.norm();
    if (old <= 0.0) throw FormatError("cannot rescale zero-length link " + j.name);
    if (length <= 0.0) throw FormatError("non-positive link length for " + j.name);
    j.offset *= length / old;
}

void SkeletonModel::finalize() {
    const int n = static_cast<int>(joints.size());
    if (n != kJointCount)
        throw FormatError("skeleton must have " + std::to_string(kJointCount) + " joints, got " +
                          std::to_string(n));

    // Assign q indices in joint order.
    int q = 0;
    int roots = 0;
    for (auto& j : joints) {
        if (j.type == DofType::Root6) {
            ++roots;
            if (j.parent != -1) throw FormatError("root joint must have parent -1");
        } else if (j.parent < 0 || j.parent >= n) {
            throw FormatError("joint " + j.name + " has invalid parent");
        }
        j.q_index = j.dof_total() > 0 ? q : -1;
        q += j.dof_total();
        if (static_cast<int>(j.rom.size()) != j.rotational_dof())
            throw FormatError("joint " + j.name + " rom table size mismatch");
        for (const auto& b : j.rom)
            if (!(b.lo < b.hi)) throw FormatError("joint " + j.name + " rom lo >= hi");
        if (j.parent != -1 && j.offset.norm() <= 0.0)
            throw FormatError("joint " + j.name + " has non-positive link length");
        if (j.type == DofType::Hinge) {
            const double an = j.hinge_axis.norm();
            if (an <= 0.0) throw FormatError("joint " + j.name + " hinge axis is zero");
            j.hinge_axis /= an;
        }
    }
    if (roots != 1) throw FormatError("skeleton must have exactly one root joint");
    if (q != kDofCount)
        throw FormatError("skeleton must have " + std::to_string(kDofCount) + " DoF, got " +
                          std::to_string(q));

    // Parents-first traversal; detects cycles and disconnected joints.
    traversal.clear();
    std::vector<bool> placed(n, false);
    for (int pass = 0; pass < n && static_cast<int>(traversal.size()) < n; ++pass) {
        for (int i = 0; i < n; ++i) {
            if (placed[i]) continue;
            if (joints[i].parent == -1 || placed[joints[i].parent]) {
                traversal.push_back(i);
                placed[i] = true;
            }
        }
    }
    if (static_cast<int>(traversal.size()) != n)
        throw FormatError("skeleton tree is cyclic or disconnected");

    neck_joint_ = joint_index("neck");
    torso_joint_ = joint_index("torso");

    // Left/right pairs by name prefix.
    symmetric_.clear();
    for (int i = 0; i < n; ++i) {
        if (joints[i].name.rfind("l_", 0) == 0) {
            const std::string rname = "r_" + joints[i].name.substr(2);
            symmetric_.emplace_back(i, joint_index(rname));
        }
    }
    for (const auto& [l, r] : symmetric_) {
        if (std::abs(link_length(l) - link_length(r)) > 1e-12 * std::max(1.0, link_length(l)))
            throw FormatError("asymmetric link lengths: " + joints[l].name + " vs " +
                              joints[r].name);
    }

    // Keypoint map: COCO order, resolved by joint name; injective by the
    // duplicate-name check in joint_index construction.
    std::vector<bool> owned(n, false);
    for (int k = 0; k < kKeypointCount; ++k) {
        keypoint_map[k] = joint_index(kKeypointNames[k]);
        if (owned[keypoint_map[k]])
            throw FormatError("keypoint map not injective at " + std::string(kKeypointNames[k]));
        owned[keypoint_map[k]] = true;
    }
}

std::string SkeletonModel::to_json_text() const {
    json j;
    j["format"] = "mocap-skeleton";
    j["version"] = version;
    j["joints"] = json::array();
    for (const auto& jt : joints) {
        json e;
        e["name"] = jt.name;
        e["parent"] = jt.parent == -1 ? json(nullptr) : json(joints[jt.parent].name);
        e["dof"] = dof_name(jt.type);
        e["offset"] = {jt.offset.x(), jt.offset.y(), jt.offset.z()};
        if (jt.type == DofType::Hinge)
            e["axis"] = {jt.hinge_axis.x(), jt.hinge_axis.y(), jt.hinge_axis.z()};
        if (!jt.rom.empty()) {
            json r = json::array();
            for (const auto& b : jt.rom) r.push_back({b.lo, b.hi});
            e["rom"] = r;
        }
        j["joints"].push_back(e);
    }
    return j.dump(2) + "\n";
}

SkeletonModel SkeletonModel::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("skeleton parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-skeleton") throw FormatError("not a mocap-skeleton file");
    SkeletonModel m;
    m.version = j.at("version").get<int>();
    if (m.version != kSupportedVersion)
        throw FormatError("unsupported skeleton version " + std::to_string(m.version) +
                          " (engine expects " + std::to_string(kSupportedVersion) + ")");

    std::map<std::string, int> index;
    for (const auto& e : j.at("joints")) {
        Joint jt;
        jt.name = e.at("name").get<std::string>();
        if (index.count(jt.name)) throw FormatError("duplicate joint name " + jt.name);
        index[jt.name] = static_cast<int>(m.joints.size());
        jt.type = dof_from_name(e.at("dof").get<std::string>());
        const auto& o = e.at("offset");
        jt.offset = Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
        if (e.contains("axis")) {
            const auto& a = e.at("axis");
            jt.hinge_axis = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
        }
        if (e.contains("rom"))
            for (const auto& b : e.at("rom"))
                jt.rom.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
        m.joints.push_back(jt);
    }
    // Resolve parents by name in a second pass.
    int i = 0;
    for (const auto& e : j.at("joints")) {
        const auto& p = e.at("parent");
        if (p.is_null()) {
            m.joints[i].parent = -1;
        } else {
            auto it = index.find(p.get<std::string>());
            if (it == index.end())
                throw FormatError("joint " + m.joints[i].name + " has unknown parent");
            m.joints[i].parent = it->second;
        }
        ++i;
    }
    m.finalize();
    return m;
}

SkeletonModel load_skeleton(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open skeleton file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return SkeletonModel::from_json_text(ss.str());
}

void save_skeleton(const SkeletonModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write skeleton file: " + path);
    out << model.to_json_text();
}

FkResult forward_kinematics_full(const SkeletonModel& model, const JointAngles& q) {
    const int n = static_cast<int>(model.joints.size());
    FkResult res;
    res.positions.resize(n, 3);
    res.world_rotations.assign(n, Mat3::Identity());
    res.dof_axes = MatX::Zero(kDofCount, 3);
    res.dof_origins = MatX::Zero(kDofCount, 3);

    for (int idx : model.traversal) {
        const Joint& jt = model.joints[idx];
        Mat3 parent_rot = Mat3::Identity();
        Vec3 pos;
        if (jt.parent == -1) {
            pos = q.segment<3>(jt.q_index);  // root translation
        } else {
            parent_rot = res.world_rotations[jt.parent];
            pos = res.positions.row(jt.parent).transpose() + parent_rot * jt.offset;
        }
        res.positions.row(idx) = pos.transpose();

        Mat3 local = Mat3::Identity();
        switch (jt.type) {
            case DofType::Root6: {
                const int qi = jt.q_index + 3;
                const Mat3 rx = rot_x(q[qi]), ry = rot_y(q[qi + 1]), rz = rot_z(q[qi + 2]);
                res.dof_axes.row(qi) = (parent_rot * Vec3::UnitX()).transpose();
                res.dof_axes.row(qi + 1) = (parent_rot * rx * Vec3::UnitY()).transpose();
                res.dof_axes.row(qi + 2) = (parent_rot * rx * ry * Vec3::UnitZ()).transpose();
                for (int s = 0; s < 3; ++s) res.dof_origins.row(qi + s) = pos.transpose();
                local = rx * ry * rz;
                break;
            }
            case DofType::EulerXYZ: {
                const int qi = jt.q_index;
                const Mat3 rx = rot_x(q[qi]), ry = rot_y(q[qi + 1]), rz = rot_z(q[qi + 2]);
                res.dof_axes.row(qi) = (parent_rot * Vec3::UnitX()).transpose();
                res.dof_axes.row(qi + 1) = (parent_rot * rx * Vec3::UnitY()).transpose();
                res.dof_axes.row(qi + 2) = (parent_rot * rx * ry * Vec3::UnitZ()).transpose();
                for (int s = 0; s < 3; ++s) res.dof_origins.row(qi + s) = pos.transpose();
                local = rx * ry * rz;
                break;
            }
            case DofType::Hinge: {
                res.dof_axes.row(jt.q_index) = (parent_rot * jt.hinge_axis).transpose();
                res.dof_origins.row(jt.q_index) = pos.transpose();
                local = axis_rotation(jt.hinge_axis, q[jt.q_index]);
                break;
            }
            case DofType::Fixed:
                break;
        }
        res.world_rotations[idx] = parent_rot * local;
    }
    return res;
}

JointPositions forward_kinematics(const SkeletonModel& model, const JointAngles& q) {
    return forward_kinematics_full(model, q).positions;
}

MatX jacobian(const SkeletonModel& model, const JointAngles& q) {
    const FkResult fk = forward_kinematics_full(model, q);
    const int n = static_cast<int>(model.joints.size());
    MatX J = MatX::Zero(3 * n, kDofCount);

    const int root_q = model.joints[model.traversal.front()].q_index;
    for (int j = 0; j < n; ++j) {
        // Root translation moves every joint identically.
        J.block<3, 3>(3 * j, root_q).setIdentity();

        const Vec3 pj = fk.positions.row(j).transpose();
        // Rotational DoF of proper ancestors.
        for (int a = model.joints[j].parent; a != -1; a = model.joints[a].parent) {
            const Joint& anc = model.joints[a];
            const int rot0 = anc.type == DofType::Root6 ? anc.q_index + 3 : anc.q_index;
            for (int s = 0; s < anc.rotational_dof(); ++s) {
                const Vec3 axis = fk.dof_axes.row(rot0 + s).transpose();
                const Vec3 origin = fk.dof_origins.row(rot0 + s).transpose();
                J.block<3, 1>(3 * j, rot0 + s) = axis.cross(pj - origin);
            }
        }
    }
    return J;
}

JointAngles clamp_to_rom(const SkeletonModel& model, const JointAngles& q) {
    JointAngles out = q;
    for (const auto& jt : model.joints) {
        if (jt.rotational_dof() == 0) continue;
        const int rot0 = jt.type == DofType::Root6 ? jt.q_index + 3 : jt.q_index;
        for (int s = 0; s < jt.rotational_dof(); ++s)
            out[rot0 + s] = std::clamp(out[rot0 + s], jt.rom[s].lo, jt.rom[s].hi);
    }
    return out;
}

bool rom_satisfied(const SkeletonModel& model, const JointAngles& q) {
    for (const auto& jt : model.joints) {
        if (jt.rotational_dof() == 0) continue;
        const int rot0 = jt.type == DofType::Root6 ? jt.q_index + 3 : jt.q_index;
        for (int s = 0; s < jt.rotational_dof(); ++s)
            if (q[rot0 + s] < jt.rom[s].lo || q[rot0 + s] > jt.rom[s].hi) return false;
    }
    return true;
}

}  // namespace mocap
