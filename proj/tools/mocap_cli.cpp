#include "mocap/calibration.hpp"
#include "mocap/camera.hpp"
#include "mocap/init.hpp"
#include "mocap/metrics.hpp"
#include "mocap/motion.hpp"
#include "mocap/pcm.hpp"
#include "mocap/scene.hpp"
#include "mocap/skeleton.hpp"
#include "mocap/tracker.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumerical = 3;

void ensure_out_dir(const std::string& out) {
    if (!out.empty()) fs::create_directories(out);
}

// Timestamps are confined to the log so primary outputs stay reproducible.
void write_run_log(const std::string& out, const std::string& command,
                   const std::string& detail) {
    if (out.empty()) return;
    std::ofstream log(fs::path(out) / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
    log << buf << "Z " << command << " " << detail << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw mocap::FormatError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<int> parse_person_filter(const std::string& spec, int count) {
    std::vector<int> out;
    if (spec.empty()) {
        for (int i = 0; i < count; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const int p = std::stoi(tok);
        if (p < 0 || p >= count)
            throw mocap::FormatError("person filter index " + tok + " out of range");
        out.push_back(p);
    }
    return out;
}

int cmd_calibrate(const std::string& obs_path, const std::string& rig_path,
                  const std::string& anchors_path, const std::string& out, bool dry_run) {
    mocap::CameraRig rig = mocap::load_rig(rig_path);
    std::vector<mocap::TrackedPoint2D> observations = mocap::load_observations(obs_path);

    mocap::CalibrationProblem problem;
    problem.rig = rig;
    problem.observations = std::move(observations);
    problem.validate();

    std::optional<json> anchors;
    if (!anchors_path.empty()) {
        json ja = json::parse(read_file(anchors_path));
        if (ja.value("format", "") != "mocap-anchors")
            throw mocap::FormatError("not a mocap-anchors file");
        anchors = ja;
    }
    if (dry_run) {
        std::cout << "calibrate: inputs valid (" << problem.observations.size()
                  << " observations, " << rig.cameras.size() << " cameras)\n";
        return kExitOk;
    }

    mocap::BundleAdjustResult ba = mocap::bundle_adjust(problem);

    if (anchors) {
        std::vector<mocap::Vec3> local, world;
        for (const auto& a : anchors->at("anchors")) {
            const int frame = a.at("frame").get<int>();
            for (size_t i = 0; i < ba.frames.size(); ++i)
                if (ba.frames[i] == frame) {
                    local.push_back(ba.points[i]);
                    world.emplace_back(a.at("world").at(0).get<double>(),
                                       a.at("world").at(1).get<double>(),
                                       a.at("world").at(2).get<double>());
                }
        }
        const mocap::WorldAlignment align = mocap::align_to_world(local, world);
        for (auto& cam : ba.rig.cameras) cam = align.apply(cam);
        for (auto& p : ba.points) p = align.apply(p);
    }

    ensure_out_dir(out);
    mocap::save_rig(ba.rig, (fs::path(out) / "refined_rig.json").string());
    {
        json rep;
        rep["format"] = "mocap-calibration-report";
        rep["initial_rms_px"] = ba.report.initial_rms_px;
        rep["final_rms_px"] = ba.report.final_rms_px;
        rep["iterations"] = ba.report.iterations;
        rep["converged"] = ba.report.converged;
        std::ofstream rf(fs::path(out) / "calibration_report.json");
        rf << rep.dump(2) << "\n";
    }
    write_run_log(out, "calibrate", obs_path);
    std::cout << "calibrate: rms " << ba.report.initial_rms_px << " -> " << ba.report.final_rms_px
              << " px in " << ba.report.iterations << " iterations"
              << (ba.report.converged ? "" : " (NOT converged)") << "\n";
    return ba.report.converged ? kExitOk : kExitNumerical;
}

int cmd_synth(const std::string& scene_path, const std::string& skeleton_path,
              const std::string& rig_path, const std::string& out, std::uint64_t seed_override,
              bool has_seed, bool dry_run) {
    mocap::SceneConfig scene = mocap::load_scene_config(scene_path);
    if (has_seed) scene.seed = seed_override;
    mocap::SkeletonModel skeleton = mocap::load_skeleton(skeleton_path);
    mocap::CameraRig rig = rig_path.empty() ? mocap::make_studio_rig() : mocap::load_rig(rig_path);

    if (dry_run) {
        std::cout << "synth: config valid (" << scene.persons << " persons, " << scene.duration_s
                  << " s)\n";
        return kExitOk;
    }
    ensure_out_dir(out);

    const mocap::GroundTruthScene gt = mocap::generate_ground_truth(scene, skeleton, rig);
    for (int p = 0; p < scene.persons; ++p) {
        char name[64];
        std::snprintf(name, sizeof(name), "gt_person_%02d.txt", p);
        mocap::save_motion(gt.sequences[p], (fs::path(out) / name).string());
        std::snprintf(name, sizeof(name), "gt_skeleton_%02d.json", p);
        mocap::save_skeleton(gt.models[p], (fs::path(out) / name).string());
    }
    mocap::save_rig(rig, (fs::path(out) / "rig.json").string());
    mocap::save_scene_config(scene, (fs::path(out) / "scene.resolved.json").string());
    write_run_log(out, "synth", scene_path);
    std::cout << "synth: wrote ground truth for " << scene.persons << " persons, "
              << gt.sequences[0].frames.size() << " frames\n";
    return kExitOk;
}

int cmd_init(const std::string& rig_path, const std::string& skeleton_path,
             const std::string& scene_path, const std::string& out, std::uint64_t seed_override,
             bool has_seed, bool dry_run) {
    mocap::SkeletonModel skeleton = mocap::load_skeleton(skeleton_path);
    mocap::SceneConfig scene = mocap::load_scene_config(scene_path);
    if (has_seed) scene.seed = seed_override;
    mocap::CameraRig rig = rig_path.empty() ? mocap::make_studio_rig() : mocap::load_rig(rig_path);
    if (dry_run) {
        std::cout << "init: inputs valid\n";
        return kExitOk;
    }
    ensure_out_dir(out);

    const mocap::GroundTruthScene gt = mocap::generate_ground_truth(scene, skeleton, rig);
    const mocap::SyntheticSceneConfig pcm_cfg =
        mocap::synthetic_pcm_config(scene, rig, skeleton, gt);
    const mocap::PcmSet pcm0 = mocap::generate_synthetic(pcm_cfg, 0);
    mocap::InitConfig init_cfg;
    init_cfg.seed = scene.seed;
    for (int p = 0; p < scene.persons; ++p) {
        const auto obs = mocap::observations_from_pcm(pcm0, rig, p);
        const mocap::InitResult r = mocap::initialize_person(obs, rig, skeleton, init_cfg);
        char name[64];
        std::snprintf(name, sizeof(name), "init_skeleton_%02d.json", p);
        mocap::save_skeleton(r.model, (fs::path(out) / name).string());
    }
    write_run_log(out, "init", scene_path);
    std::cout << "init: " << scene.persons << " persons initialized\n";
    return kExitOk;
}

struct TrackOutcome {
    std::vector<mocap::MotionSequence> sequences;
    std::vector<int> person_ids;
    json summary;
};

TrackOutcome run_synthetic_tracking(const mocap::SceneConfig& scene,
                                    const mocap::SkeletonModel& skeleton,
                                    const mocap::CameraRig& rig, mocap::TrackerConfig tracker_cfg,
                                    const std::vector<int>& person_filter) {
    const mocap::GroundTruthScene gt = mocap::generate_ground_truth(scene, skeleton, rig);
    mocap::SyntheticSceneConfig pcm_cfg = mocap::synthetic_pcm_config(scene, rig, skeleton, gt);

    const mocap::PcmSet pcm0 = mocap::generate_synthetic(pcm_cfg, 0);
    std::vector<mocap::PersonInit> inits;
    mocap::InitConfig init_cfg;
    init_cfg.seed = scene.seed;
    for (int p : person_filter) {
        const auto obs = mocap::observations_from_pcm(pcm0, rig, p);
        const mocap::InitResult r = mocap::initialize_person(obs, rig, skeleton, init_cfg);
        inits.push_back({r.model, r.q, r.positions});
    }

    mocap::Tracker tracker(rig, tracker_cfg, inits, scene.frame_rate, 0);
    const int frames = static_cast<int>(gt.sequences[0].frames.size());
    for (int f = 1; f < frames; ++f) {
        const mocap::PcmSet pcm = mocap::generate_synthetic(pcm_cfg, f);
        tracker.step_frame(pcm);
    }

    TrackOutcome out;
    json persons = json::array();
    for (size_t i = 0; i < person_filter.size(); ++i) {
        const int p = person_filter[i];
        out.sequences.push_back(tracker.sequence(static_cast<int>(i)));
        out.sequences.back().person_id = p;
        out.person_ids.push_back(p);

        mocap::EvalPair pair =
            mocap::body_eval_pair(out.sequences.back(), gt.sequences[p], skeleton);
        const mocap::MetricsReport rep = mocap::evaluate(pair);
        int lost_frames = 0;
        for (const auto& fr : out.sequences.back().frames) lost_frames += fr.lost ? 1 : 0;
        json jp;
        jp["person"] = p;
        jp["mpjpe_mm"] = rep.mpjpe_mm;
        jp["success_rate"] = rep.success_rate_pct;
        jp["pcp_endpoint"] = rep.pcp_endpoint_pct;
        jp["lost_frames"] = lost_frames;
        jp["abandoned"] = tracker.abandoned(static_cast<int>(i));
        persons.push_back(jp);
    }
    out.summary["format"] = "mocap-track-summary";
    out.summary["persons"] = persons;
    out.summary["frames"] = frames;
    return out;
}

int cmd_track(const std::string& rig_path, const std::string& skeleton_path,
              const std::string& tracker_path, const std::string& pcm_source,
              const std::string& out, const std::string& persons_filter,
              std::uint64_t seed_override, bool has_seed, int threads, bool dry_run) {
    mocap::SkeletonModel skeleton = mocap::load_skeleton(skeleton_path);
    mocap::TrackerConfig tracker_cfg =
        tracker_path.empty() ? mocap::TrackerConfig{} : mocap::load_tracker_config(tracker_path);
    if (threads >= 0) tracker_cfg.threads = threads;

    // The pcm source is a synthetic scene config; externally computed
    // raster heatmaps enter through the pcm module's sidecar loader.
    json src = json::parse(read_file(pcm_source));
    if (src.value("format", "") != "mocap-scene")
        throw mocap::FormatError("pcm source must be a mocap-scene config");
    mocap::SceneConfig scene = mocap::load_scene_config(pcm_source);
    if (has_seed) scene.seed = seed_override;
    mocap::CameraRig rig = rig_path.empty() ? mocap::make_studio_rig() : mocap::load_rig(rig_path);

    const std::vector<int> person_filter = parse_person_filter(persons_filter, scene.persons);
    if (person_filter.empty()) throw mocap::FormatError("empty person filter");

    if (dry_run) {
        std::cout << "track: inputs valid (" << person_filter.size() << " persons)\n";
        return kExitOk;
    }
    ensure_out_dir(out);

    const TrackOutcome res =
        run_synthetic_tracking(scene, skeleton, rig, tracker_cfg, person_filter);

    for (size_t i = 0; i < res.sequences.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "motion_person_%02d.txt", res.person_ids[i]);
        mocap::save_motion(res.sequences[i], (fs::path(out) / name).string());
    }
    {
        std::ofstream sf(fs::path(out) / "summary.json");
        sf << res.summary.dump(2) << "\n";
    }
    mocap::save_tracker_config(tracker_cfg, (fs::path(out) / "tracker.resolved.json").string());
    mocap::save_scene_config(scene, (fs::path(out) / "scene.resolved.json").string());
    mocap::save_rig(rig, (fs::path(out) / "rig.resolved.json").string());
    write_run_log(out, "track", pcm_source);
    std::cout << "track: " << res.sequences.size() << " persons, "
              << res.summary["frames"].get<int>() << " frames\n";
    for (const auto& jp : res.summary["persons"])
        std::cout << "  person " << jp["person"].get<int>() << ": mpjpe "
                  << jp["mpjpe_mm"].get<double>() << " mm, success@150 "
                  << jp["success_rate"].get<double>() << "%, lost "
                  << jp["lost_frames"].get<int>() << "\n";
    return kExitOk;
}

int cmd_eval(const std::vector<std::string>& pred_paths,
             const std::vector<std::string>& truth_paths, const std::string& skeleton_path,
             const std::string& out, bool dry_run) {
    if (pred_paths.size() != truth_paths.size() || pred_paths.empty())
        throw mocap::FormatError("need matching non-empty --pred/--truth lists");
    mocap::SkeletonModel skeleton = mocap::load_skeleton(skeleton_path);
    if (dry_run) {
        std::cout << "eval: inputs valid\n";
        return kExitOk;
    }
    ensure_out_dir(out);

    std::vector<mocap::MetricsReport> rows;
    mocap::MetricsReport agg;
    std::string curve;
    for (size_t i = 0; i < pred_paths.size(); ++i) {
        const mocap::MotionSequence pred = mocap::load_motion(pred_paths[i]);
        const mocap::MotionSequence truth = mocap::load_motion(truth_paths[i]);
        const mocap::EvalPair pair = mocap::body_eval_pair(pred, truth, skeleton);
        rows.push_back(mocap::evaluate(pair));
        for (const auto& [frame, v] : mocap::per_frame_mpjpe_mm(pair)) {
            char line[96];
            std::snprintf(line, sizeof(line), "%zu %d %.17g\n", i, frame, v);
            curve += line;
        }
    }
    for (const auto& r : rows) {
        agg.frames += r.frames;
        agg.successful += r.successful;
        agg.success_rate_pct += r.success_rate_pct * r.frames;
        agg.mpjpe_mm += r.mpjpe_mm * r.successful;
        agg.pcp_endpoint_pct += r.pcp_endpoint_pct * r.successful;
        agg.pcp_midpoint_pct += r.pcp_midpoint_pct * r.successful;
        agg.pck50_pct += r.pck50_pct * r.successful;
        agg.pck100_pct += r.pck100_pct * r.successful;
    }
    if (agg.frames > 0) agg.success_rate_pct /= agg.frames;
    if (agg.successful > 0) {
        agg.mpjpe_mm /= agg.successful;
        agg.pcp_endpoint_pct /= agg.successful;
        agg.pcp_midpoint_pct /= agg.successful;
        agg.pck50_pct /= agg.successful;
        agg.pck100_pct /= agg.successful;
    }

    {
        std::ofstream rf(fs::path(out) / "metrics_report.json");
        rf << mocap::metrics_report_to_json(rows, agg);
    }
    {
        std::ofstream cf(fs::path(out) / "mpjpe_curve.txt");
        cf << "# columns: sequence frame mpjpe_mm\n" << curve;
    }
    write_run_log(out, "eval", pred_paths.front());
    std::cout << "eval: aggregate mpjpe " << agg.mpjpe_mm << " mm, success@150 "
              << agg.success_rate_pct << "%\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-camera multi-person markerless motion capture engine"};
    app.require_subcommand(1);

    std::string out_dir;
    std::uint64_t seed = 0;
    bool dry_run = false;
    int threads = -1;
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "seed override");
    app.add_flag("--dry-run", dry_run, "validate inputs, write nothing");
    app.add_option("--threads", threads, "worker thread cap (0 = hardware)");

    auto* calibrate = app.add_subcommand("calibrate", "refine camera extrinsics and focal lengths");
    std::string obs_path, rig_path, anchors_path;
    calibrate->add_option("--observations", obs_path, "sphere observation file")->required();
    calibrate->add_option("--rig", rig_path, "initial rig file")->required();
    calibrate->add_option("--anchors", anchors_path, "world anchor file");

    auto* synth = app.add_subcommand("synth", "generate the synthetic ground-truth scene");
    std::string scene_path, skeleton_path, synth_rig;
    synth->add_option("--scene", scene_path, "scene config")->required();
    synth->add_option("--skeleton", skeleton_path, "skeleton template config")->required();
    synth->add_option("--rig", synth_rig, "rig file (default: built-in studio rig)");

    auto* init_cmd = app.add_subcommand("init", "initialize persons from first-frame keypoints");
    std::string init_rig, init_skeleton, init_scene;
    init_cmd->add_option("--rig", init_rig, "rig file (default: built-in studio rig)");
    init_cmd->add_option("--skeleton", init_skeleton, "skeleton template")->required();
    init_cmd->add_option("--scene", init_scene, "scene config (pcm source)")->required();

    auto* track = app.add_subcommand("track", "run the tracking pipeline");
    std::string track_rig, track_skeleton, track_cfg_path, track_pcm, track_persons;
    track->add_option("--rig", track_rig, "rig file (default: built-in studio rig)");
    track->add_option("--skeleton", track_skeleton, "skeleton template")->required();
    track->add_option("--tracker", track_cfg_path, "tracker config (default: built-in)");
    track->add_option("--pcm", track_pcm, "pcm source (scene config)")->required();
    track->add_option("--persons", track_persons, "comma-separated person filter");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate predicted sequences against truth");
    std::vector<std::string> pred_paths, truth_paths;
    std::string eval_skeleton;
    eval_cmd->add_option("--pred", pred_paths, "predicted motion files")->required();
    eval_cmd->add_option("--truth", truth_paths, "ground-truth motion files")->required();
    eval_cmd->add_option("--skeleton", eval_skeleton, "skeleton config")->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*calibrate) return cmd_calibrate(obs_path, rig_path, anchors_path, out_dir, dry_run);
        if (*synth)
            return cmd_synth(scene_path, skeleton_path, synth_rig, out_dir, seed,
                             seed_opt->count() > 0, dry_run);
        if (*init_cmd)
            return cmd_init(init_rig, init_skeleton, init_scene, out_dir, seed,
                            seed_opt->count() > 0, dry_run);
        if (*track)
            return cmd_track(track_rig, track_skeleton, track_cfg_path, track_pcm, out_dir,
                             track_persons, seed, seed_opt->count() > 0, threads, dry_run);
        if (*eval_cmd) return cmd_eval(pred_paths, truth_paths, eval_skeleton, out_dir, dry_run);
    } catch (const mocap::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const mocap::LookupError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const mocap::EmptyRangeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const mocap::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
