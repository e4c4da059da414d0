#include "mocap/scene.hpp"

#include "rng_util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

namespace mocap {

using detail::stream_seed;
using nlohmann::json;

void SceneConfig::validate() const {
    if (persons < 1) throw FormatError("scene: persons must be >= 1");
    if (duration_s <= 0.0) throw FormatError("scene: duration must be positive");
    if (frame_rate <= 0.0) throw FormatError("scene: frame rate must be positive");
    if (motion_band_hz <= 0.0) throw FormatError("scene: motion band must be positive");
    if (motion_scale <= 0.0 || motion_scale > 0.85)
        throw FormatError("scene: motion_scale must be in (0, 0.85]");
    if (wander_radius_m < 0.0) throw FormatError("scene: negative wander radius");
    if (blob_sigma_px <= 0.0) throw FormatError("scene: sigma must be positive");
    if (dropout < 0.0 || dropout > 1.0) throw FormatError("scene: dropout not in [0,1]");
    if (amplitude < 0.0 || amplitude > 1.0) throw FormatError("scene: amplitude not in [0,1]");
    if (false_positives < 0) throw FormatError("scene: negative false positive count");
    if (false_positive_amplitude < 0.0 || false_positive_amplitude > 1.0)
        throw FormatError("scene: false positive amplitude not in [0,1]");
    if (confusion_radius_px < 0.0) throw FormatError("scene: negative confusion radius");
}

SceneConfig load_scene_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scene config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("scene config parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-scene") throw FormatError("not a mocap-scene file");
    SceneConfig c;
    c.persons = j.value("persons", c.persons);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.frame_rate = j.value("frame_rate", c.frame_rate);
    c.motion_band_hz = j.value("motion_band_hz", c.motion_band_hz);
    c.motion_scale = j.value("motion_scale", c.motion_scale);
    c.wander_radius_m = j.value("wander_radius_m", c.wander_radius_m);
    c.seed = j.value("seed", c.seed);
    c.blob_sigma_px = j.value("blob_sigma_px", c.blob_sigma_px);
    c.amplitude = j.value("amplitude", c.amplitude);
    c.center_noise_px = j.value("center_noise_px", c.center_noise_px);
    c.dropout = j.value("dropout", c.dropout);
    c.false_positives = j.value("false_positives", c.false_positives);
    c.false_positive_amplitude = j.value("false_positive_amplitude", c.false_positive_amplitude);
    c.occlusion_confusion = j.value("occlusion_confusion", c.occlusion_confusion);
    c.confusion_radius_px = j.value("confusion_radius_px", c.confusion_radius_px);
    c.validate();
    return c;
}

void save_scene_config(const SceneConfig& cfg, const std::string& path) {
    json j;
    j["format"] = "mocap-scene";
    j["persons"] = cfg.persons;
    j["duration_s"] = cfg.duration_s;
    j["frame_rate"] = cfg.frame_rate;
    j["motion_band_hz"] = cfg.motion_band_hz;
    j["motion_scale"] = cfg.motion_scale;
    j["wander_radius_m"] = cfg.wander_radius_m;
    j["seed"] = cfg.seed;
    j["blob_sigma_px"] = cfg.blob_sigma_px;
    j["amplitude"] = cfg.amplitude;
    j["center_noise_px"] = cfg.center_noise_px;
    j["dropout"] = cfg.dropout;
    j["false_positives"] = cfg.false_positives;
    j["false_positive_amplitude"] = cfg.false_positive_amplitude;
    j["occlusion_confusion"] = cfg.occlusion_confusion;
    j["confusion_radius_px"] = cfg.confusion_radius_px;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write scene config: " + path);
    out << j.dump(2) << "\n";
}

namespace {

CameraModel make_camera(int id, int viewpoint, const Vec3& position, const Vec3& target,
                        double focal_px, int width, int height) {
    CameraModel c;
    c.id = id;
    c.viewpoint = viewpoint;
    c.width = width;
    c.height = height;
    c.intrinsics = Mat3::Identity();
    c.intrinsics(0, 0) = focal_px;
    c.intrinsics(1, 1) = focal_px;
    c.intrinsics(0, 2) = width / 2.0;
    c.intrinsics(1, 2) = height / 2.0;

    // Look-at with world up (0,0,1); image y runs downward.
    const Vec3 fwd = (target - position).normalized();
    const Vec3 up(0.0, 0.0, 1.0);
    const Vec3 right = fwd.cross(up).normalized();
    const Vec3 down = fwd.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = fwd.transpose();
    c.rotation = r;
    c.translation = -r * position;
    return c;
}

}  // namespace

CameraRig make_studio_rig() {
    CameraRig rig;
    const Vec3 target(0.0, 0.0, 1.0);
    const double corners[4][2] = {{5.5, 6.5}, {-5.5, 6.5}, {-5.5, -6.5}, {5.5, -6.5}};
    int id = 0;
    for (int v = 0; v < 4; ++v) {
        const Vec3 wide_pos(corners[v][0], corners[v][1], 3.5);
        const Vec3 tele_pos(corners[v][0] * 1.05, corners[v][1] * 1.05, 3.8);
        rig.cameras.push_back(make_camera(id++, v, wide_pos, target, 900.0, 1920, 1200));
        rig.cameras.push_back(make_camera(id++, v, tele_pos, target, 1350.0, 1920, 1200));
    }
    rig.validate();
    return rig;
}

GroundTruthScene generate_ground_truth(const SceneConfig& cfg, const SkeletonModel& template_model,
                                       const CameraRig& rig) {
    cfg.validate();
    const int frames = static_cast<int>(std::lround(cfg.duration_s * cfg.frame_rate));
    const int nv = rig.viewpoint_count();

    // Staggered home positions inside the central area.
    const double homes[][2] = {{0.0, 0.0},  {1.6, 1.9},  {-1.6, 1.9}, {-1.6, -1.9}, {1.6, -1.9},
                               {0.0, 2.6},  {0.0, -2.6}, {2.4, 0.0},  {-2.4, 0.0},  {2.4, 2.6}};
    const int max_homes = static_cast<int>(sizeof(homes) / sizeof(homes[0]));

    GroundTruthScene out;
    for (int p = 0; p < cfg.persons; ++p) {
        std::mt19937_64 rng(stream_seed(cfg.seed, p, 101));
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        SkeletonModel model = template_model;
        const double scale = 0.95 + 0.15 * uni(rng);
        for (auto& jt : model.joints)
            if (jt.parent != -1) jt.offset *= scale;
        model.finalize();

        const double hx = homes[p % max_homes][0];
        const double hy = homes[p % max_homes][1];
        const double hz = 0.95 * scale;

        // Harmonic parameters: per rotational DoF two sinusoids whose total
        // amplitude stays strictly inside the RoM box around a center the
        // box contains together with the rest angle.
        struct Harm {
            double a1, f1, p1, a2, f2, p2, center;
        };
        std::vector<Harm> harm(kDofCount);
        for (const auto& jt : model.joints) {
            if (jt.rotational_dof() == 0) continue;
            const int rot0 = jt.type == DofType::Root6 ? jt.q_index + 3 : jt.q_index;
            for (int s = 0; s < jt.rotational_dof(); ++s) {
                Harm h{};
                double lo = jt.rom[s].lo, hi = jt.rom[s].hi;
                if (jt.type == DofType::Root6) {
                    lo = -0.12;  // keep the subject roughly upright
                    hi = 0.12;
                    if (s == 2) {
                        lo = -0.6;
                        hi = 0.6;
                    }
                }
                const double span = hi - lo;
                h.center = std::clamp(0.0, lo + 0.35 * span, hi - 0.35 * span);
                const double amp = cfg.motion_scale * std::min(h.center - lo, hi - h.center);
                const double split = 0.3 + 0.4 * uni(rng);
                h.a1 = amp * split;
                h.a2 = amp * (1.0 - split);
                h.f1 = 0.2 + (cfg.motion_band_hz - 0.2) * uni(rng);
                h.f2 = 0.2 + (cfg.motion_band_hz - 0.2) * uni(rng);
                h.p1 = 2.0 * M_PI * uni(rng);
                h.p2 = 2.0 * M_PI * uni(rng);
                harm[rot0 + s] = h;
            }
        }
        const double wf1 = 0.05 + 0.06 * uni(rng), wp1 = 2.0 * M_PI * uni(rng);
        const double wf2 = 0.05 + 0.06 * uni(rng), wp2 = 2.0 * M_PI * uni(rng);
        const double zf = 0.2 + 0.3 * uni(rng), zp = 2.0 * M_PI * uni(rng);

        MotionSequence seq;
        seq.person_id = p;
        seq.frame_rate = cfg.frame_rate;
        seq.viewpoint_count = nv;
        for (int fidx = 0; fidx < frames; ++fidx) {
            const double t = fidx / cfg.frame_rate;
            // Smooth ramp from the rest pose over the first second; frame 0
            // is exactly the rest pose (straight trunk), which the
            // initialization rules assume.
            const double u = std::min(t / 1.0, 1.0);
            const double env = u * u * (3.0 - 2.0 * u);

            JointAngles q = JointAngles::Zero(kDofCount);
            const int rq = model.joints[model.traversal.front()].q_index;
            q[rq + 0] = hx + env * cfg.wander_radius_m * std::sin(2.0 * M_PI * wf1 * t + wp1);
            q[rq + 1] = hy + env * cfg.wander_radius_m * std::sin(2.0 * M_PI * wf2 * t + wp2);
            q[rq + 2] = hz + env * 0.02 * std::sin(2.0 * M_PI * zf * t + zp);
            for (int d = 0; d < kDofCount; ++d) {
                const Harm& h = harm[d];
                if (h.a1 == 0.0 && h.a2 == 0.0 && h.center == 0.0) continue;
                q[d] = env * (h.center + h.a1 * std::sin(2.0 * M_PI * h.f1 * t + h.p1) +
                              h.a2 * std::sin(2.0 * M_PI * h.f2 * t + h.p2));
            }

            FramePose fp;
            fp.frame = fidx;
            fp.q = q;
            fp.positions = forward_kinematics(model, q);
            fp.weights.fill(1.0);
            fp.cameras.assign(nv, -1);
            seq.frames.push_back(std::move(fp));
        }
        out.sequences.push_back(std::move(seq));
        out.models.push_back(std::move(model));
    }
    return out;
}

SyntheticSceneConfig synthetic_pcm_config(const SceneConfig& cfg, const CameraRig& rig,
                                          const SkeletonModel& skeleton,
                                          const GroundTruthScene& scene) {
    SyntheticSceneConfig s;
    s.rig = &rig;
    s.skeleton = &skeleton;
    for (const auto& seq : scene.sequences) s.ground_truth.push_back(&seq);
    s.blob_sigma_px = cfg.blob_sigma_px;
    s.amplitude = cfg.amplitude;
    s.center_noise_px = cfg.center_noise_px;
    s.dropout = cfg.dropout;
    s.false_positives = cfg.false_positives;
    s.false_positive_amplitude = cfg.false_positive_amplitude;
    s.occlusion_confusion = cfg.occlusion_confusion;
    s.confusion_radius_px = cfg.confusion_radius_px;
    s.seed = cfg.seed;
    return s;
}

std::vector<Vec3> lissajous_path(int samples, const Vec3& center, const Vec3& half_extent) {
    std::vector<Vec3> out;
    out.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        const double u = static_cast<double>(i) / samples;
        out.emplace_back(center.x() + half_extent.x() * std::sin(2.0 * M_PI * 3.0 * u + 0.5),
                         center.y() + half_extent.y() * std::sin(2.0 * M_PI * 2.0 * u + 1.7),
                         center.z() + half_extent.z() * std::sin(2.0 * M_PI * 5.0 * u + 0.9));
    }
    return out;
}

}  // namespace mocap
