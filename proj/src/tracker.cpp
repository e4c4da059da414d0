#include "mocap/tracker.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <thread>

namespace mocap {

using nlohmann::json;

void TrackerConfig::validate() const {
    if (margin <= 1.0) throw FormatError("tracker: margin must be > 1");
    if (lattice_halfwidth < 1) throw FormatError("tracker: lattice halfwidth must be >= 1");
    if (lattice_spacing <= 0.0) throw FormatError("tracker: lattice spacing must be positive");
    if (occlusion_weight < 0.0 || occlusion_weight > 1.0)
        throw FormatError("tracker: occlusion weight not in [0,1]");
    if (occlusion_radius_px < 0.0) throw FormatError("tracker: negative occlusion radius");
    if (rotation_threshold <= 0.0) throw FormatError("tracker: rotation threshold must be positive");
    if (cutoff_hz <= 0.0) throw FormatError("tracker: cutoff must be positive");
    if (filter_order != 1 && filter_order != 2)
        throw FormatError("tracker: filter order must be 1 or 2");
    if (smoothing_warmup < 0) throw FormatError("tracker: negative warmup");
    if (min_box_px < 0.0) throw FormatError("tracker: negative min box size");
    if (threads < 0) throw FormatError("tracker: negative thread count");
    if (ik.step_tolerance <= 0.0 || ik.residual_tolerance <= 0.0 || ik.max_iterations <= 0)
        throw FormatError("tracker: invalid ik tolerances");
}

TrackerConfig load_tracker_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open tracker config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("tracker config parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    if (j.value("format", "") != "mocap-tracker") throw FormatError("not a mocap-tracker file");
    TrackerConfig c;
    c.margin = j.value("margin", c.margin);
    c.lattice_halfwidth = j.value("lattice_halfwidth", c.lattice_halfwidth);
    c.lattice_spacing = j.value("lattice_spacing", c.lattice_spacing);
    c.occlusion_weight = j.value("occlusion_weight", c.occlusion_weight);
    c.occlusion_radius_px = j.value("occlusion_radius_px", c.occlusion_radius_px);
    c.rotation_enabled = j.value("rotation_enabled", c.rotation_enabled);
    c.rotation_threshold = j.value("rotation_threshold", c.rotation_threshold);
    c.cutoff_hz = j.value("cutoff_hz", c.cutoff_hz);
    c.filter_order = j.value("filter_order", c.filter_order);
    c.smoothing_warmup = j.value("smoothing_warmup", c.smoothing_warmup);
    c.min_box_px = j.value("min_box_px", c.min_box_px);
    c.lost_reentry_frames = j.value("lost_reentry_frames", c.lost_reentry_frames);
    c.threads = j.value("threads", c.threads);
    c.ik.damping = j.value("ik_damping", c.ik.damping);
    c.ik.max_iterations = j.value("ik_max_iterations", c.ik.max_iterations);
    c.ik.step_tolerance = j.value("ik_step_tolerance", c.ik.step_tolerance);
    c.ik.residual_tolerance = j.value("ik_residual_tolerance", c.ik.residual_tolerance);
    c.ik.regularization = j.value("ik_regularization", c.ik.regularization);
    c.validate();
    return c;
}

void save_tracker_config(const TrackerConfig& cfg, const std::string& path) {
    json j;
    j["format"] = "mocap-tracker";
    j["margin"] = cfg.margin;
    j["lattice_halfwidth"] = cfg.lattice_halfwidth;
    j["lattice_spacing"] = cfg.lattice_spacing;
    j["occlusion_weight"] = cfg.occlusion_weight;
    j["occlusion_radius_px"] = cfg.occlusion_radius_px;
    j["rotation_enabled"] = cfg.rotation_enabled;
    j["rotation_threshold"] = cfg.rotation_threshold;
    j["cutoff_hz"] = cfg.cutoff_hz;
    j["filter_order"] = cfg.filter_order;
    j["smoothing_warmup"] = cfg.smoothing_warmup;
    j["min_box_px"] = cfg.min_box_px;
    j["lost_reentry_frames"] = cfg.lost_reentry_frames;
    j["threads"] = cfg.threads;
    j["ik_damping"] = cfg.ik.damping;
    j["ik_max_iterations"] = cfg.ik.max_iterations;
    j["ik_step_tolerance"] = cfg.ik.step_tolerance;
    j["ik_residual_tolerance"] = cfg.ik.residual_tolerance;
    j["ik_regularization"] = cfg.ik.regularization;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write tracker config: " + path);
    out << j.dump(2) << "\n";
}

void PoseHistory::push(const JointAngles& q, const JointPositions& p) {
    entries.push_back({q, p});
    while (entries.size() > 3) entries.pop_front();
}

JointPositions predict_pose(const PoseHistory& history) {
    const auto& e = history.entries;
    if (e.empty()) throw NoHistoryError("pose prediction requires at least one frame");
    if (e.size() == 1) return e.back().positions;
    if (e.size() == 2) return 2.0 * e[1].positions - e[0].positions;
    return 1.5 * e[2].positions - e[1].positions + 0.5 * e[0].positions;
}

std::optional<BoundingBox> bounding_box(const JointPositions& pred, const CameraModel& cam,
                                        double margin, double min_box_px) {
    bool any_visible = false;
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool first = true;
    for (int j = 0; j < pred.rows(); ++j) {
        const Vec3 p = pred.row(j).transpose();
        if (cam.depth(p) <= 0.0) continue;
        const Vec2 u = project(cam, p);
        if (is_visible(cam, p)) any_visible = true;
        if (first) {
            min_x = max_x = u.x();
            min_y = max_y = u.y();
            first = false;
        } else {
            min_x = std::min(min_x, u.x());
            max_x = std::max(max_x, u.x());
            min_y = std::min(min_y, u.y());
            max_y = std::max(max_y, u.y());
        }
    }
    if (!any_visible) return std::nullopt;
    BoundingBox box;
    box.center = Vec2((max_x + min_x) / 2.0, (max_y + min_y) / 2.0);
    box.size = Vec2(std::max(margin * (max_x - min_x), min_box_px),
                    std::max(margin * (max_y - min_y), min_box_px));
    return box;
}

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace

double box_rotation(const JointPositions& pred, const CameraModel& cam,
                    const SkeletonModel& model) {
    const Vec3 neck = pred.row(model.neck_joint()).transpose();
    const Vec3 torso = pred.row(model.torso_joint()).transpose();
    if (cam.depth(neck) <= 0.0 || cam.depth(torso) <= 0.0) return 0.0;
    const Vec2 un = project(cam, neck);
    const Vec2 ut = project(cam, torso);
    const Vec2 d = un - ut;
    if (d.norm() < 1e-9) return 0.0;
    // Image y runs downward; measure the inclination against image "up"
    // so an upright subject maps to 0.
    return wrap_angle(M_PI / 2.0 - std::atan2(-d.y(), d.x()));
}

std::optional<int> select_camera(const JointPositions& pred, const CameraRig& rig, int viewpoint,
                                 const SkeletonModel& model) {
    const Vec3 neck = pred.row(model.neck_joint()).transpose();
    int best = -1;
    double best_d2 = 0.0;
    int best_id = 0;
    for (int idx : rig.cameras_at(viewpoint)) {
        const CameraModel& cam = rig.cameras[idx];
        if (!is_visible(cam, neck)) continue;
        const Vec2 u = project(cam, neck);
        const double d2 = (u - Vec2(cam.width / 2.0, cam.height / 2.0)).squaredNorm();
        if (best < 0 || d2 < best_d2 || (d2 == best_d2 && cam.id < best_id)) {
            best = idx;
            best_d2 = d2;
            best_id = cam.id;
        }
    }
    if (best < 0) return std::nullopt;
    return best;
}

std::vector<double> occlusion_weights(const std::vector<JointPositions>& all_predictions,
                                      int person, const Vec3& keypoint_pred,
                                      const CameraRig& rig, const std::vector<int>& chosen,
                                      const TrackerConfig& cfg) {
    std::vector<double> w(chosen.size(), 1.0);
    for (size_t v = 0; v < chosen.size(); ++v) {
        if (chosen[v] < 0) continue;
        const CameraModel& cam = rig.cameras[chosen[v]];
        const double own_depth = cam.depth(keypoint_pred);
        if (own_depth <= 0.0) continue;
        const Vec2 mu = project(cam, keypoint_pred);
        bool occluded = false;
        for (size_t o = 0; o < all_predictions.size() && !occluded; ++o) {
            if (static_cast<int>(o) == person || all_predictions[o].rows() == 0) continue;
            const JointPositions& other = all_predictions[o];
            for (int j = 0; j < other.rows(); ++j) {
                const Vec3 pj = other.row(j).transpose();
                const double dj = cam.depth(pj);
                if (dj <= 0.0 || dj >= own_depth) continue;
                if ((project(cam, pj) - mu).norm() < cfg.occlusion_radius_px) {
                    occluded = true;
                    break;
                }
            }
        }
        if (occluded) w[v] = cfg.occlusion_weight;
    }
    return w;
}

LatticeResult lattice_search(const Vec3& pred, const PcmSet& pcm, int person, int keypoint,
                             const CameraRig& rig, const std::vector<int>& chosen,
                             const std::vector<double>& viewpoint_weights,
                             const TrackerConfig& cfg) {
    const int k = cfg.lattice_halfwidth;
    const double s = cfg.lattice_spacing;

    auto weighted_score = [&](const Vec3& point) {
        double acc = 0.0;
        for (size_t v = 0; v < chosen.size(); ++v) {
            if (chosen[v] < 0) continue;
            const CameraModel& cam = rig.cameras[chosen[v]];
            if (cam.depth(point) <= 0.0) continue;
            acc += viewpoint_weights[v] *
                   pcm.query(chosen[v], person, keypoint, project(cam, point));
        }
        return acc;
    };

    // The center cell wins every tie it participates in; other ties break
    // to the lexicographically smallest (a, b, c).
    LatticeResult best;
    best.cell = Eigen::Vector3i::Zero();
    best.point = pred;
    double best_score = weighted_score(pred);
    for (int a = -k; a <= k; ++a)
        for (int b = -k; b <= k; ++b)
            for (int c = -k; c <= k; ++c) {
                if (a == 0 && b == 0 && c == 0) continue;
                const Vec3 point = pred + s * Vec3(a, b, c);
                const double score = weighted_score(point);
                if (score > best_score) {
                    best_score = score;
                    best.cell = Eigen::Vector3i(a, b, c);
                    best.point = point;
                }
            }

    // Eq.-12 weight: unweighted PCM sum at the argmax.
    double wsum = 0.0;
    for (size_t v = 0; v < chosen.size(); ++v) {
        if (chosen[v] < 0) continue;
        const CameraModel& cam = rig.cameras[chosen[v]];
        if (cam.depth(best.point) <= 0.0) continue;
        wsum += pcm.query(chosen[v], person, keypoint, project(cam, best.point));
    }
    best.weight = wsum;
    return best;
}

LowPassFilter::LowPassFilter(double cutoff_hz, double sample_rate_hz, int order, int warmup)
    : sample_rate_(sample_rate_hz), order_(order), warmup_(warmup) {
    if (cutoff_hz <= 0.0 || sample_rate_hz <= 0.0)
        throw FormatError("filter: cutoff and sample rate must be positive");
    if (order != 1 && order != 2) throw FormatError("filter: order must be 1 or 2");
    if (cutoff_hz >= sample_rate_hz / 2.0) {
        passthrough_ = true;
        return;
    }
    passthrough_ = false;
    const double wc = std::tan(M_PI * cutoff_hz / sample_rate_hz);
    if (order == 1) {
        const double d = 1.0 + wc;
        b0_ = wc / d;
        b1_ = wc / d;
        b2_ = 0.0;
        a1_ = (wc - 1.0) / d;
        a2_ = 0.0;
    } else {
        const double d = 1.0 + std::sqrt(2.0) * wc + wc * wc;
        b0_ = wc * wc / d;
        b1_ = 2.0 * b0_;
        b2_ = b0_;
        a1_ = 2.0 * (wc * wc - 1.0) / d;
        a2_ = (1.0 - std::sqrt(2.0) * wc + wc * wc) / d;
    }
}

JointPositions LowPassFilter::step(const JointPositions& in) {
    if (passthrough_) return in;
    if (samples_seen_ == 0) {
        x1_ = in;
        x2_ = in;
        y1_ = in;
        y2_ = in;
    }
    const bool warm = samples_seen_ < warmup_;
    ++samples_seen_;
    if (warm) {
        x2_ = x1_;
        x1_ = in;
        y2_ = y1_;
        y1_ = in;
        return in;
    }
    JointPositions out = b0_ * in + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = in;
    y2_ = y1_;
    y1_ = out;
    return out;
}

double LowPassFilter::magnitude_response(double f_hz) const {
    if (passthrough_) return 1.0;
    const std::complex<double> z = std::polar(1.0, -2.0 * M_PI * f_hz / sample_rate_);
    const std::complex<double> num = b0_ + b1_ * z + b2_ * z * z;
    const std::complex<double> den = 1.0 + a1_ * z + a2_ * z * z;
    return std::abs(num / den);
}

namespace {

// Keypoints computable from a rotated crop: shoulders, elbows, wrists,
// eyes, ears, nose (COCO indices 0..10). Hips, knees, ankles are not.
constexpr int kUpperBodyKeypoints = 11;

}  // namespace

Tracker::Tracker(CameraRig rig, TrackerConfig cfg, const std::vector<PersonInit>& persons,
                 double frame_rate, int start_frame)
    : rig_(std::move(rig)), cfg_(std::move(cfg)), frame_rate_(frame_rate),
      cursor_(start_frame + 1) {
    cfg_.validate();
    rig_.validate();
    lost_limit_ = cfg_.lost_reentry_frames >= 0 ? cfg_.lost_reentry_frames
                                                : static_cast<int>(frame_rate / 2.0);
    const int nv = rig_.viewpoint_count();
    for (const auto& init : persons) {
        PersonState st;
        st.model = init.model;
        st.history.frame_rate = frame_rate;
        // Eq.-3 prediction needs three frames; the initial pose seeds all of
        // them so frame 1 starts from a static prediction.
        for (int i = 0; i < 3; ++i) st.history.push(init.q, init.positions);
        st.filter = LowPassFilter(cfg_.cutoff_hz, frame_rate, cfg_.filter_order,
                                  cfg_.smoothing_warmup);
        st.filter.step(init.positions);
        st.last_weights.fill(1.0);
        st.last_prediction = init.positions;
        persons_.push_back(std::move(st));

        MotionSequence seq;
        seq.person_id = static_cast<int>(sequences_.size());
        seq.frame_rate = frame_rate;
        seq.viewpoint_count = nv;
        FramePose fp;
        fp.frame = start_frame;
        fp.q = init.q;
        fp.positions = init.positions;
        fp.weights.fill(1.0);
        fp.cameras.assign(nv, -1);
        seq.frames.push_back(std::move(fp));
        sequences_.push_back(std::move(seq));
    }
}

PersonFrameResult Tracker::track_person(int person, const std::vector<JointPositions>& predictions,
                                        const PcmSet& pcm) {
    PersonState& st = persons_[person];
    const int nv = rig_.viewpoint_count();
    const JointPositions& pred = predictions[person];

    PersonFrameResult res;
    res.chosen_cameras.assign(nv, -1);
    res.boxes.assign(nv, BoundingBox{});

    std::vector<int> chosen(nv, -1);
    bool any_view = false;
    bool rotated_mode = false;
    for (int v = 0; v < nv; ++v) {
        const auto cam_idx = select_camera(pred, rig_, v, st.model);
        if (!cam_idx) continue;
        chosen[v] = *cam_idx;
        any_view = true;
        const CameraModel& cam = rig_.cameras[*cam_idx];
        res.chosen_cameras[v] = cam.id;
        if (auto box = bounding_box(pred, cam, cfg_.margin, cfg_.min_box_px)) {
            box->rotation = box_rotation(pred, cam, st.model);
            if (cfg_.rotation_enabled && std::abs(box->rotation) > cfg_.rotation_threshold)
                rotated_mode = true;
            res.boxes[v] = *box;
        }
    }
    if (!any_view) {
        res.lost = true;
        return res;
    }

    IkTargets targets{};
    for (int n = 0; n < kKeypointCount; ++n) {
        const int joint = st.model.keypoint_map[n];
        if (rotated_mode && n >= kUpperBodyKeypoints) {
            // Rotated crops yield only the 11 upper keypoints; lower-body
            // targets coast on the previous frame with decaying weight.
            res.keypoints[n] = st.history.entries.back().positions.row(joint).transpose();
            res.weights[n] = 0.5 * st.last_weights[n];
        } else {
            const Vec3 kp_pred = pred.row(joint).transpose();
            const std::vector<double> vw =
                occlusion_weights(predictions, person, kp_pred, rig_, chosen, cfg_);
            const LatticeResult lat =
                lattice_search(kp_pred, pcm, person, n, rig_, chosen, vw, cfg_);
            res.keypoints[n] = lat.point;
            res.weights[n] = lat.weight;
        }
        targets[n].position = res.keypoints[n];
        targets[n].weight = res.weights[n];
        targets[n].active = true;
    }

    try {
        // Regularization pulls keypoint-less joints toward the previous
        // frame in both stages.
        IkConfig ik = cfg_.ik;
        ik.reference = st.history.entries.back().q;
        const IkResult stage1 = solve_weighted(st.model, st.history.entries.back().q, targets, ik);
        const JointPositions smoothed = st.filter.step(stage1.positions);
        res.smoothed = smoothed;

        IkTargets stage2{};
        for (int n = 0; n < kKeypointCount; ++n) {
            stage2[n].position = smoothed.row(st.model.keypoint_map[n]).transpose();
            stage2[n].weight = 1.0;
            stage2[n].active = true;
        }
        const IkResult fin = solve_constrained(st.model, stage1.q, stage2, ik);
        res.q = fin.q;
        res.positions = fin.positions;
    } catch (const IllPosedError&) {
        // Total confidence blackout behaves like losing the person.
        res.lost = true;
    }
    return res;
}

FrameResult Tracker::step_frame(const PcmSet& pcm) {
    if (pcm.frame() != cursor_)
        throw LookupError("pcm frame " + std::to_string(pcm.frame()) + " does not match cursor " +
                          std::to_string(cursor_));
    const int np = person_count();

    // Phase 1: snapshot predictions; Eq. 9 reads every other person's.
    std::vector<JointPositions> predictions(np);
    for (int p = 0; p < np; ++p) {
        PersonState& st = persons_[p];
        if (st.abandoned) {
            predictions[p] = JointPositions(0, 3);
            continue;
        }
        predictions[p] = st.lost_streak > 0 ? st.last_prediction : predict_pose(st.history);
    }

    // Phase 2: persons are independent given the snapshot.
    FrameResult frame;
    frame.frame = cursor_;
    frame.persons.resize(np);
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int nthreads = std::max(1, std::min(cfg_.threads == 0 ? hw : cfg_.threads, np));
    auto worker = [&](int first) {
        for (int p = first; p < np; p += nthreads) {
            if (persons_[p].abandoned) {
                frame.persons[p].lost = true;
                continue;
            }
            frame.persons[p] = track_person(p, predictions, pcm);
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker, i);
        for (auto& t : pool) t.join();
    }

    // Phase 3: single-writer commit.
    const int nv = rig_.viewpoint_count();
    for (int p = 0; p < np; ++p) {
        PersonState& st = persons_[p];
        PersonFrameResult& res = frame.persons[p];
        if (st.abandoned) continue;
        if (res.lost) {
            ++st.lost_streak;
            if (st.lost_streak > lost_limit_) st.abandoned = true;
            FramePose fp;
            fp.frame = cursor_;
            fp.q = st.history.entries.back().q;
            fp.positions = st.history.entries.back().positions;
            fp.weights.fill(0.0);
            fp.cameras.assign(nv, -1);
            fp.lost = true;
            sequences_[p].frames.push_back(std::move(fp));
            continue;
        }
        st.lost_streak = 0;
        st.history.push(res.q, res.positions);
        st.last_weights = res.weights;
        st.last_prediction = predictions[p];

        FramePose fp;
        fp.frame = cursor_;
        fp.q = res.q;
        fp.positions = res.positions;
        fp.weights = res.weights;
        fp.cameras = res.chosen_cameras;
        sequences_[p].frames.push_back(std::move(fp));
    }
    ++cursor_;
    return frame;
}

}  // namespace mocap
