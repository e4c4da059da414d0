#include "mocap/calibration.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

namespace mocap {

using nlohmann::json;

namespace {

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Mat3 so3_exp(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew(w);
    const Vec3 a = w / theta;
    const Mat3 k = skew(a);
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

// Pixel distance between an observation and the projection of X; large
// sentinel when X is behind the camera.
double reprojection_distance(const CameraModel& cam, const Vec3& x, const Vec2& pixel) {
    const Vec3 pc = cam.rotation * x + cam.translation;
    if (pc.z() <= 1e-12) return 1e9;
    const Vec3 h = cam.intrinsics * pc;
    return (Vec2(h.x() / h.z(), h.y() / h.z()) - pixel).norm();
}

}  // namespace

TriangulationResult triangulate(const std::vector<Ray>& rays) {
    const int n = static_cast<int>(rays.size());
    if (n < 2) throw DegenerateGeometryError("triangulation needs at least 2 rays");

    MatX A(2 * n, 4);
    for (int i = 0; i < n; ++i) {
        const Mat34 m = rays[i].camera->projection_matrix();
        A.row(2 * i) = rays[i].pixel.x() * m.row(2) - m.row(0);
        A.row(2 * i + 1) = rays[i].pixel.y() * m.row(2) - m.row(1);
        A.row(2 * i).normalize();
        A.row(2 * i + 1).normalize();
    }

    Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeFullV);
    const VecX sv = svd.singularValues();
    if (sv[2] < 1e-12 * sv[0])
        throw DegenerateGeometryError("triangulation system is rank deficient");
    Eigen::Vector4d xh = svd.matrixV().col(3);
    if (std::abs(xh[3]) < 1e-12 * xh.head<3>().norm())
        throw DegenerateGeometryError("rays are (nearly) parallel");
    Vec3 x = xh.head<3>() / xh[3];

    // One Gauss-Newton step on the reprojection error.
    Mat3 jtj = Mat3::Zero();
    Vec3 jtr = Vec3::Zero();
    for (const auto& ray : rays) {
        const CameraModel& cam = *ray.camera;
        const Vec3 pc = cam.rotation * x + cam.translation;
        if (pc.z() <= 1e-12) continue;
        const double fx = cam.intrinsics(0, 0), fy = cam.intrinsics(1, 1);
        const double skew_k = cam.intrinsics(0, 1);
        const double cx = cam.intrinsics(0, 2), cy = cam.intrinsics(1, 2);
        const Vec2 pred((fx * pc.x() + skew_k * pc.y()) / pc.z() + cx,
                        fy * pc.y() / pc.z() + cy);
        Eigen::Matrix<double, 2, 3> dpix;
        dpix << fx / pc.z(), skew_k / pc.z(),
            -(fx * pc.x() + skew_k * pc.y()) / (pc.z() * pc.z()), 0, fy / pc.z(),
            -fy * pc.y() / (pc.z() * pc.z());
        const Eigen::Matrix<double, 2, 3> j = dpix * cam.rotation;
        const Vec2 r = pred - ray.pixel;
        jtj.noalias() += j.transpose() * j;
        jtr.noalias() += j.transpose() * r;
    }
    if (std::abs(jtj.determinant()) > 1e-18) x -= jtj.ldlt().solve(jtr);

    double sq = 0.0;
    for (const auto& ray : rays) {
        const double d = reprojection_distance(*ray.camera, x, ray.pixel);
        sq += d * d;
    }
    return {x, std::sqrt(sq / (2.0 * n))};
}

RansacResult triangulate_ransac(const std::vector<Ray>& rays, double threshold_px,
                                int iterations, std::uint64_t seed) {
    const int n = static_cast<int>(rays.size());
    if (n < 2) throw DegenerateGeometryError("RANSAC needs at least 2 rays");
    if (threshold_px <= 0.0) throw IllPosedError("RANSAC threshold must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    std::vector<int> best;
    for (int it = 0; it < iterations; ++it) {
        int a = pick(rng), b = pick(rng);
        if (a == b) continue;
        Vec3 candidate;
        try {
            candidate = triangulate({rays[a], rays[b]}).point;
        } catch (const DegenerateGeometryError&) {
            continue;
        }
        std::vector<int> inliers;
        for (int i = 0; i < n; ++i)
            if (reprojection_distance(*rays[i].camera, candidate, rays[i].pixel) <= threshold_px)
                inliers.push_back(i);
        if (inliers.size() > best.size()) best = std::move(inliers);
    }
    if (best.size() < 2) throw NoConsensusError("no 2-ray consensus under threshold");

    std::vector<Ray> in_rays;
    for (int i : best) in_rays.push_back(rays[i]);
    const TriangulationResult fin = triangulate(in_rays);
    return {fin.point, fin.rms_reprojection_px, best};
}

void CalibrationProblem::validate() const {
    rig.validate();
    if (!fixed_intrinsics.empty() && fixed_intrinsics.size() != rig.cameras.size())
        throw FormatError("fixed_intrinsics size mismatch");
    std::map<int, std::vector<int>> by_frame;
    for (const auto& o : observations) by_frame[o.frame].push_back(o.camera_id);
    if (by_frame.empty()) throw FormatError("calibration problem has no observations");
    for (const auto& [frame, cams] : by_frame) {
        std::vector<int> unique = cams;
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        if (unique.size() < 2)
            throw FormatError("frame " + std::to_string(frame) +
                              " observed by fewer than 2 cameras");
        for (int id : unique) rig.by_id(id);  // throws LookupError on unknown id
    }
}

namespace {

struct BaState {
    std::vector<Mat3> rot;
    std::vector<Vec3> trans;
    std::vector<double> focal_scale;
    std::vector<Vec3> points;
};

struct BaObs {
    int cam;    // camera index in rig
    int point;  // point index
    Vec2 pixel;
};

double ba_cost(const CameraRig& rig, const BaState& s, const std::vector<BaObs>& obs) {
    double e = 0.0;
    for (const auto& o : obs) {
        const CameraModel& c = rig.cameras[o.cam];
        const Vec3 pc = s.rot[o.cam] * s.points[o.point] + s.trans[o.cam];
        if (pc.z() <= 1e-9) {
            e += 1e12;  // behind-camera candidates are never accepted
            continue;
        }
        const double f = s.focal_scale[o.cam];
        const double u = (f * c.intrinsics(0, 0) * pc.x()) / pc.z() + c.intrinsics(0, 2);
        const double v = (f * c.intrinsics(1, 1) * pc.y()) / pc.z() + c.intrinsics(1, 2);
        e += (Vec2(u, v) - o.pixel).squaredNorm();
    }
    return e;
}

}  // namespace

BundleAdjustResult bundle_adjust(const CalibrationProblem& problem, const BundleAdjustConfig& cfg) {
    problem.validate();
    const CameraRig& rig = problem.rig;
    const int nc = static_cast<int>(rig.cameras.size());

    // Camera index by id, point index by frame.
    std::map<int, int> cam_index;
    for (int i = 0; i < nc; ++i) cam_index[rig.cameras[i].id] = i;
    std::map<int, int> point_index;
    std::vector<int> frames;
    for (const auto& o : problem.observations)
        if (!point_index.count(o.frame)) {
            point_index[o.frame] = static_cast<int>(frames.size());
            frames.push_back(o.frame);
        }
    const int np = static_cast<int>(frames.size());

    std::vector<BaObs> obs;
    obs.reserve(problem.observations.size());
    for (const auto& o : problem.observations)
        obs.push_back({cam_index.at(o.camera_id), point_index.at(o.frame), o.pixel});

    BaState s;
    s.rot.resize(nc);
    s.trans.resize(nc);
    s.focal_scale.assign(nc, 1.0);
    for (int i = 0; i < nc; ++i) {
        s.rot[i] = rig.cameras[i].rotation;
        s.trans[i] = rig.cameras[i].translation;
    }

    // Initial points from linear triangulation with the rough rig.
    {
        std::vector<std::vector<Ray>> per_point(np);
        for (const auto& o : obs) per_point[o.point].push_back({&rig.cameras[o.cam], o.pixel});
        s.points.resize(np);
        for (int j = 0; j < np; ++j) s.points[j] = triangulate(per_point[j]).point;
    }

    const int residual_rows = 2 * static_cast<int>(obs.size());
    auto rms = [&](double cost) { return std::sqrt(cost / residual_rows); };

    // 7 parameters (3 rot, 3 trans, 1 focal) per camera. Camera 0's pose
    // columns stay zero to fix the gauge (its focal remains free); zero
    // gradient and damping keep those parameters exactly untouched.
    const int ncp = 7 * nc;
    auto cam_block = [&](int cam) { return 7 * cam; };

    BundleAdjustResult result;
    double cost = ba_cost(rig, s, obs);
    result.report.initial_rms_px = rms(cost);
    result.report.residual_history.push_back(rms(cost));

    const double mean_dist_target = [&] {
        const Vec3 c0 = -s.rot[0].transpose() * s.trans[0];
        double acc = 0.0;
        for (const auto& p : s.points) acc += (p - c0).norm();
        return acc / np;
    }();

    double lambda = cfg.initial_damping;
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations && !converged; ++it) {
        // Normal equations in Schur form: dense camera block, block-diagonal
        // point blocks, camera-point coupling per observation.
        MatX hcc = MatX::Zero(ncp, ncp);
        VecX gc = VecX::Zero(ncp);
        std::vector<Mat3> hpp(np, Mat3::Zero());
        std::vector<Vec3> gp(np, Vec3::Zero());
        std::vector<std::map<int, Eigen::Matrix<double, 7, 3>>> hcp(nc);

        for (const auto& o : obs) {
            const CameraModel& c = rig.cameras[o.cam];
            const Vec3& x = s.points[o.point];
            const Vec3 pc = s.rot[o.cam] * x + s.trans[o.cam];
            if (pc.z() <= 1e-9)
                throw NumericalFailureError("point behind camera during bundle adjustment");
            const double f = s.focal_scale[o.cam];
            const double fx = f * c.intrinsics(0, 0), fy = f * c.intrinsics(1, 1);
            const double iz = 1.0 / pc.z();
            const Vec2 pred(fx * pc.x() * iz + c.intrinsics(0, 2),
                            fy * pc.y() * iz + c.intrinsics(1, 2));
            const Vec2 r = pred - o.pixel;

            Eigen::Matrix<double, 2, 3> dpix;
            dpix << fx * iz, 0, -fx * pc.x() * iz * iz, 0, fy * iz, -fy * pc.y() * iz * iz;

            const Eigen::Matrix<double, 2, 3> jp = dpix * s.rot[o.cam];  // d r / d X
            Eigen::Matrix<double, 2, 7> jc = Eigen::Matrix<double, 2, 7>::Zero();
            if (o.cam != 0) {
                jc.block<2, 3>(0, 0) = -dpix * s.rot[o.cam] * skew(x);  // d r / d omega
                jc.block<2, 3>(0, 3) = dpix;                            // d r / d t
            }
            const bool fixed_f =
                !problem.fixed_intrinsics.empty() && problem.fixed_intrinsics[o.cam];
            if (!fixed_f) {
                jc(0, 6) = c.intrinsics(0, 0) * pc.x() * iz;
                jc(1, 6) = c.intrinsics(1, 1) * pc.y() * iz;
            }

            hpp[o.point].noalias() += jp.transpose() * jp;
            gp[o.point].noalias() -= jp.transpose() * r;
            {
                const int cb = cam_block(o.cam);
                hcc.block<7, 7>(cb, cb).noalias() += jc.transpose() * jc;
                gc.segment<7>(cb).noalias() -= jc.transpose() * r;
                auto [it, inserted] = hcp[o.cam].try_emplace(o.point);
                if (inserted) it->second.setZero();
                it->second.noalias() += jc.transpose() * jp;
            }
        }

        bool accepted = false;
        while (lambda < 1e14) {
            // Marquardt damping on both blocks.
            MatX hcc_d = hcc;
            for (int i = 0; i < ncp; ++i)
                hcc_d(i, i) += lambda * std::max(hcc(i, i), 1e-12);
            std::vector<Mat3> hpp_inv(np);
            bool singular = false;
            for (int j = 0; j < np; ++j) {
                Mat3 d = hpp[j];
                for (int k = 0; k < 3; ++k) d(k, k) += lambda * std::max(hpp[j](k, k), 1e-12);
                const double det = d.determinant();
                if (!std::isfinite(det) || std::abs(det) < 1e-300) {
                    singular = true;
                    break;
                }
                hpp_inv[j] = d.inverse();
            }
            if (singular) throw DegenerateGeometryError("singular point block in normal equations");

            // Schur complement over points.
            MatX schur = hcc_d;
            VecX rhs = gc;
            for (int cam = 0; cam < nc; ++cam) {
                for (const auto& [pj, wcp] : hcp[cam]) {
                    const Eigen::Matrix<double, 7, 3> w = wcp * hpp_inv[pj];
                    rhs.segment<7>(cam_block(cam)).noalias() -= w * gp[pj];
                    for (int cam2 = 0; cam2 < nc; ++cam2) {
                        auto it2 = hcp[cam2].find(pj);
                        if (it2 == hcp[cam2].end()) continue;
                        schur.block<7, 7>(cam_block(cam), cam_block(cam2)).noalias() -=
                            w * it2->second.transpose();
                    }
                }
            }

            const VecX dc = schur.ldlt().solve(rhs);
            if (!dc.allFinite())
                throw DegenerateGeometryError("singular camera block in normal equations");

            BaState cand = s;
            for (int cam = 0; cam < nc; ++cam) {
                const int cb = cam_block(cam);
                cand.rot[cam] = s.rot[cam] * so3_exp(dc.segment<3>(cb));
                cand.trans[cam] = s.trans[cam] + dc.segment<3>(cb + 3);
                cand.focal_scale[cam] = s.focal_scale[cam] + dc[cb + 6];
            }
            for (int j = 0; j < np; ++j) {
                Vec3 back = gp[j];
                for (int cam = 0; cam < nc; ++cam) {
                    auto it2 = hcp[cam].find(j);
                    if (it2 == hcp[cam].end()) continue;
                    back.noalias() -= it2->second.transpose() * dc.segment<7>(cam_block(cam));
                }
                cand.points[j] = s.points[j] + hpp_inv[j] * back;
            }

            const double cand_cost = ba_cost(rig, cand, obs);
            if (std::isfinite(cand_cost) && cand_cost <= cost) {
                const double rel = (cost - cand_cost) / std::max(cost, 1e-300);
                s = std::move(cand);
                cost = cand_cost;
                lambda = std::max(lambda * 0.1, 1e-12);
                result.report.residual_history.push_back(rms(cost));
                ++result.report.iterations;
                accepted = true;
                if (rel < cfg.relative_tolerance) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            converged = rms(cost) < 1e-6 || result.report.iterations > 0;
            break;
        }
    }
    result.report.converged = converged;
    result.report.final_rms_px = rms(cost);

    // Fix the scale gauge: restore the mean point distance to camera 0.
    // This similarity leaves every reprojection unchanged.
    {
        const Vec3 c0 = -s.rot[0].transpose() * s.trans[0];
        double mean = 0.0;
        for (const auto& p : s.points) mean += (p - c0).norm();
        mean /= np;
        if (mean > 1e-12) {
            const double sc = mean_dist_target / mean;
            const Vec3 tw = s.rot[0].transpose() * ((sc - 1.0) * s.trans[0]);
            for (auto& p : s.points) p = sc * p + tw;
            // Camera 0 is analytically invariant under this similarity;
            // skipping it keeps the frozen pose bit-exact.
            for (int cam = 1; cam < nc; ++cam)
                s.trans[cam] = sc * s.trans[cam] - s.rot[cam] * tw;
        }
    }

    result.rig = rig;
    for (int i = 0; i < nc; ++i) {
        result.rig.cameras[i].rotation = s.rot[i];
        result.rig.cameras[i].translation = s.trans[i];
        result.rig.cameras[i].intrinsics(0, 0) *= s.focal_scale[i];
        result.rig.cameras[i].intrinsics(1, 1) *= s.focal_scale[i];
    }
    result.points = s.points;
    result.frames = frames;
    return result;
}

CameraModel WorldAlignment::apply(const CameraModel& cam) const {
    // With y = s R x + t, the camera observing x as R_c x + t_c observes y
    // as R_c R^T y + (s t_c - R_c R^T t); depths come out in the new metric
    // scale and the camera center maps exactly like a point.
    CameraModel out = cam;
    out.rotation = cam.rotation * rotation.transpose();
    out.translation = scale * cam.translation - out.rotation * translation;
    return out;
}

WorldAlignment align_to_world(const std::vector<Vec3>& points_local,
                              const std::vector<Vec3>& points_world) {
    const int n = static_cast<int>(points_local.size());
    if (n < 3 || points_world.size() != points_local.size())
        throw DegenerateGeometryError("alignment needs >= 3 matched anchors");

    Vec3 mx = Vec3::Zero(), my = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
        mx += points_local[i];
        my += points_world[i];
    }
    mx /= n;
    my /= n;

    Mat3 sigma = Mat3::Zero();
    double var_x = 0.0;
    MatX centered(n, 3);
    for (int i = 0; i < n; ++i) {
        const Vec3 xc = points_local[i] - mx;
        const Vec3 yc = points_world[i] - my;
        sigma.noalias() += yc * xc.transpose();
        var_x += xc.squaredNorm();
        centered.row(i) = xc.transpose();
    }
    sigma /= n;
    var_x /= n;

    // Collinearity of the anchors leaves a rotation about the line free.
    Eigen::JacobiSVD<MatX> shape(centered, Eigen::ComputeThinV);
    if (shape.singularValues()[1] < 1e-9 * std::max(shape.singularValues()[0], 1e-300))
        throw DegenerateGeometryError("anchor points are collinear");

    Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

    WorldAlignment a;
    a.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    a.scale = (svd.singularValues().asDiagonal() * d).trace() / var_x;
    if (a.scale <= 0.0) throw DegenerateGeometryError("non-positive alignment scale");
    a.translation = my - a.scale * a.rotation * mx;
    return a;
}

std::vector<TrackedPoint2D> load_observations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open observation file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("observation parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-observations")
        throw FormatError("not a mocap-observations file");
    std::vector<TrackedPoint2D> out;
    for (const auto& r : j.at("records")) {
        TrackedPoint2D o;
        o.frame = r.at(0).get<int>();
        o.camera_id = r.at(1).get<int>();
        o.pixel = Vec2(r.at(2).get<double>(), r.at(3).get<double>());
        out.push_back(o);
    }
    return out;
}

void save_observations(const std::vector<TrackedPoint2D>& obs, const std::string& path) {
    json j;
    j["format"] = "mocap-observations";
    j["records"] = json::array();
    for (const auto& o : obs) j["records"].push_back({o.frame, o.camera_id, o.pixel.x(), o.pixel.y()});
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write observation file: " + path);
    out << j.dump() << "\n";
}

}  // namespace mocap
