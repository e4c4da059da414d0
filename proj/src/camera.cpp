#include "mocap/camera.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace mocap {

using nlohmann::json;

Mat34 CameraModel::projection_matrix() const {
    Mat34 rt;
    rt.leftCols<3>() = rotation;
    rt.col(3) = translation;
    return intrinsics * rt;
}

void CameraModel::validate() const {
    const Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw FormatError("camera " + std::to_string(id) + ": rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw FormatError("camera " + std::to_string(id) + ": det(R) != 1");
    if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0)
        throw FormatError("camera " + std::to_string(id) + ": K not upper-triangular");
    if (intrinsics(0, 0) <= 0.0 || intrinsics(1, 1) <= 0.0)
        throw FormatError("camera " + std::to_string(id) + ": non-positive focal length");
    const double cx = intrinsics(0, 2), cy = intrinsics(1, 2);
    if (cx < 0.0 || cx > width || cy < 0.0 || cy > height)
        throw FormatError("camera " + std::to_string(id) + ": principal point outside image");
    if (width <= 0 || height <= 0)
        throw FormatError("camera " + std::to_string(id) + ": non-positive resolution");
}

Vec2 project(const CameraModel& cam, const Vec3& point) {
    const Vec3 pc = cam.rotation * point + cam.translation;
    if (pc.z() <= 0.0) throw BehindCameraError(pc.z());
    const Vec3 h = cam.intrinsics * pc;
    return {h.x() / h.z(), h.y() / h.z()};
}

bool is_visible(const CameraModel& cam, const Vec3& point) {
    const Vec3 pc = cam.rotation * point + cam.translation;
    if (pc.z() <= 0.0) return false;
    const Vec3 h = cam.intrinsics * pc;
    const double u = h.x() / h.z(), v = h.y() / h.z();
    return u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height;
}

int CameraRig::viewpoint_count() const {
    int max_vp = -1;
    for (const auto& c : cameras) max_vp = std::max(max_vp, c.viewpoint);
    return max_vp + 1;
}

std::vector<int> CameraRig::cameras_at(int viewpoint) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(cameras.size()); ++i)
        if (cameras[i].viewpoint == viewpoint) out.push_back(i);
    return out;
}

const CameraModel& CameraRig::by_id(int camera_id) const {
    for (const auto& c : cameras)
        if (c.id == camera_id) return c;
    throw LookupError("no camera with id " + std::to_string(camera_id));
}

void CameraRig::validate() const {
    if (cameras.empty()) throw FormatError("rig has no cameras");
    std::set<int> ids;
    for (const auto& c : cameras) {
        c.validate();
        if (!ids.insert(c.id).second)
            throw FormatError("duplicate camera id " + std::to_string(c.id));
        if (c.viewpoint < 0) throw FormatError("negative viewpoint id");
    }
    const int nv = viewpoint_count();
    for (int v = 0; v < nv; ++v)
        if (cameras_at(v).empty())
            throw FormatError("viewpoint " + std::to_string(v) + " is empty");
}

namespace {

json mat_to_json(const Mat3& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
    return a;
}

Mat3 mat_from_json(const json& a) {
    if (!a.is_array() || a.size() != 9) throw FormatError("expected 9-element matrix array");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = a.at(3 * r + c).get<double>();
    return m;
}

}  // namespace

std::string rig_to_json_text(const CameraRig& rig) {
    json j;
    j["format"] = "mocap-rig";
    j["version"] = 1;
    j["world_frame"] = "right-handed, z-up, meters";
    j["cameras"] = json::array();
    for (const auto& c : rig.cameras) {
        json jc;
        jc["id"] = c.id;
        jc["K"] = mat_to_json(c.intrinsics);
        jc["R"] = mat_to_json(c.rotation);
        jc["t"] = {c.translation.x(), c.translation.y(), c.translation.z()};
        jc["resolution"] = {c.width, c.height};
        jc["viewpoint"] = c.viewpoint;
        j["cameras"].push_back(jc);
    }
    return j.dump(2) + "\n";
}

CameraRig rig_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("rig parse error: ") + e.what(), static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-rig") throw FormatError("not a mocap-rig file");
    CameraRig rig;
    for (const auto& jc : j.at("cameras")) {
        CameraModel c;
        c.id = jc.at("id").get<int>();
        c.intrinsics = mat_from_json(jc.at("K"));
        c.rotation = mat_from_json(jc.at("R"));
        const auto& t = jc.at("t");
        c.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
        c.width = jc.at("resolution").at(0).get<int>();
        c.height = jc.at("resolution").at(1).get<int>();
        c.viewpoint = jc.at("viewpoint").get<int>();
        rig.cameras.push_back(c);
    }
    rig.validate();
    return rig;
}

CameraRig load_rig(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open rig file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return rig_from_json_text(ss.str());
}

void save_rig(const CameraRig& rig, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write rig file: " + path);
    out << rig_to_json_text(rig);
}

}  // namespace mocap
