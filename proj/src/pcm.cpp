#include "mocap/pcm.hpp"

#include "mocap/motion.hpp"

#include "rng_util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace mocap {

using detail::stream_seed;
using nlohmann::json;

PcmSet::PcmSet(int cameras, int persons, int frame, Provenance provenance)
    : cameras_(cameras), persons_(persons), frame_(frame), provenance_(provenance) {
    image_sizes_.assign(cameras, {0, 0});
    fields_.resize(static_cast<size_t>(cameras) * persons * kKeypointCount);
}

int PcmSet::index_of(int camera, int person, int keypoint) const {
    if (camera < 0 || camera >= cameras_ || person < 0 || person >= persons_ || keypoint < 0 ||
        keypoint >= kKeypointCount)
        throw LookupError("pcm index out of range (camera " + std::to_string(camera) +
                          ", person " + std::to_string(person) + ", keypoint " +
                          std::to_string(keypoint) + ")");
    return (camera * persons_ + person) * kKeypointCount + keypoint;
}

void PcmSet::set_image_size(int camera, int width, int height) {
    if (camera < 0 || camera >= cameras_) throw LookupError("bad camera index");
    image_sizes_[camera] = {width, height};
}

void PcmSet::add_blob(int camera, int person, int keypoint, const PcmBlob& blob) {
    fields_[index_of(camera, person, keypoint)].blobs.push_back(blob);
}

void PcmSet::set_raster(int camera, int person, int keypoint, int width, int height,
                        std::vector<float> values) {
    if (static_cast<int>(values.size()) != width * height)
        throw FormatError("raster size mismatch");
    Field& f = fields_[index_of(camera, person, keypoint)];
    f.grid = std::move(values);
    f.grid_w = width;
    f.grid_h = height;
    for (float& v : f.grid) v = std::clamp(v, 0.0f, 1.0f);
}

double PcmSet::query(int camera, int person, int keypoint, const Vec2& pixel) const {
    const Field& f = fields_[index_of(camera, person, keypoint)];
    const auto [w, h] = image_sizes_[camera];
    if (pixel.x() < 0.0 || pixel.x() >= w || pixel.y() < 0.0 || pixel.y() >= h) return 0.0;

    if (!f.grid.empty()) {
        // Bilinear with texel centers at integer + 0.5, clamped at edges.
        const double gx = pixel.x() * f.grid_w / w - 0.5;
        const double gy = pixel.y() * f.grid_h / h - 0.5;
        const int x0 = static_cast<int>(std::floor(gx));
        const int y0 = static_cast<int>(std::floor(gy));
        const double fx = gx - x0, fy = gy - y0;
        auto texel = [&](int x, int y) {
            x = std::clamp(x, 0, f.grid_w - 1);
            y = std::clamp(y, 0, f.grid_h - 1);
            return static_cast<double>(f.grid[static_cast<size_t>(y) * f.grid_w + x]);
        };
        const double v = (1 - fx) * (1 - fy) * texel(x0, y0) + fx * (1 - fy) * texel(x0 + 1, y0) +
                         (1 - fx) * fy * texel(x0, y0 + 1) + fx * fy * texel(x0 + 1, y0 + 1);
        return std::clamp(v, 0.0, 1.0);
    }

    double best = 0.0;
    for (const auto& b : f.blobs) {
        const double d2 = (pixel - b.center).squaredNorm();
        best = std::max(best, b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma)));
    }
    return std::clamp(best, 0.0, 1.0);
}

std::optional<PcmPeak> PcmSet::peak(int camera, int person, int keypoint) const {
    const Field& f = fields_[index_of(camera, person, keypoint)];
    if (!f.grid.empty()) {
        const auto [w, h] = image_sizes_[camera];
        int best = -1;
        float bv = 0.0f;
        for (int i = 0; i < static_cast<int>(f.grid.size()); ++i)
            if (f.grid[i] > bv) {
                bv = f.grid[i];
                best = i;
            }
        if (best < 0) return std::nullopt;
        const double gx = (best % f.grid_w + 0.5) * w / f.grid_w;
        const double gy = (best / f.grid_w + 0.5) * h / f.grid_h;
        return PcmPeak{Vec2(gx, gy), static_cast<double>(bv)};
    }
    const PcmBlob* best = nullptr;
    for (const auto& b : f.blobs)
        if (!best || b.amplitude > best->amplitude) best = &b;
    if (!best || best->amplitude <= 0.0) return std::nullopt;
    return PcmPeak{best->center, best->amplitude};
}

void SyntheticSceneConfig::validate() const {
    if (!rig) throw FormatError("synthetic config: rig missing");
    if (!skeleton) throw FormatError("synthetic config: skeleton missing");
    if (ground_truth.empty()) throw FormatError("synthetic config: no ground truth");
    for (const auto* g : ground_truth)
        if (!g) throw FormatError("synthetic config: null ground truth");
    if (blob_sigma_px <= 0.0) throw FormatError("synthetic config: sigma must be positive");
    if (dropout < 0.0 || dropout > 1.0) throw FormatError("synthetic config: dropout not in [0,1]");
    if (amplitude < 0.0 || amplitude > 1.0)
        throw FormatError("synthetic config: amplitude not in [0,1]");
    if (false_positive_amplitude < 0.0 || false_positive_amplitude > 1.0)
        throw FormatError("synthetic config: false positive amplitude not in [0,1]");
    if (false_positives < 0) throw FormatError("synthetic config: negative false positive count");
}

PcmSet generate_synthetic(const SyntheticSceneConfig& cfg, int frame) {
    cfg.validate();
    const CameraRig& rig = *cfg.rig;
    const int nc = static_cast<int>(rig.cameras.size());
    const int np = static_cast<int>(cfg.ground_truth.size());
    for (const auto* g : cfg.ground_truth)
        if (!g->has_frame(frame))
            throw LookupError("ground truth does not cover frame " + std::to_string(frame));

    PcmSet set(nc, np, frame, PcmSet::Provenance::Synthetic);

    // World keypoint positions and camera depths for this frame.
    std::vector<std::array<Vec3, kKeypointCount>> kp(np);
    for (int p = 0; p < np; ++p) {
        const auto& pose = cfg.ground_truth[p]->at_frame(frame);
        for (int k = 0; k < kKeypointCount; ++k)
            kp[p][k] = pose.positions.row(cfg.skeleton->keypoint_map[k]).transpose();
    }

    for (int c = 0; c < nc; ++c) {
        const CameraModel& cam = rig.cameras[c];
        set.set_image_size(c, cam.width, cam.height);
        for (int p = 0; p < np; ++p) {
            std::mt19937_64 rng(stream_seed(cfg.seed, frame, c, p));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int k = 0; k < kKeypointCount; ++k) {
                if (cam.depth(kp[p][k]) <= 0.0) continue;
                Vec2 mu = project(cam, kp[p][k]);
                if (mu.x() < 0 || mu.x() >= cam.width || mu.y() < 0 || mu.y() >= cam.height)
                    continue;
                if (cfg.dropout > 0.0 && uni(rng) < cfg.dropout) continue;

                if (cfg.occlusion_confusion) {
                    // Severe-occlusion failure mode: the estimator latches
                    // onto the nearer person's corresponding part.
                    const double own_depth = cam.depth(kp[p][k]);
                    for (int o = 0; o < np; ++o) {
                        if (o == p || cam.depth(kp[o][k]) <= 0.0) continue;
                        const Vec2 mo = project(cam, kp[o][k]);
                        if ((mo - mu).norm() < cfg.confusion_radius_px &&
                            cam.depth(kp[o][k]) < own_depth) {
                            mu = mo;
                            break;
                        }
                    }
                }
                if (cfg.center_noise_px > 0.0) {
                    mu.x() += cfg.center_noise_px * gauss(rng);
                    mu.y() += cfg.center_noise_px * gauss(rng);
                }
                set.add_blob(c, p, k, {mu, cfg.amplitude, cfg.blob_sigma_px});
            }
            std::uniform_int_distribution<int> pick(0, kKeypointCount - 1);
            for (int i = 0; i < cfg.false_positives; ++i) {
                const int k = pick(rng);
                const Vec2 at(uni(rng) * cam.width, uni(rng) * cam.height);
                set.add_blob(c, p, k, {at, cfg.false_positive_amplitude, cfg.blob_sigma_px});
            }
        }
    }
    return set;
}

namespace {

struct RasterField {
    int width, height, camera, person, keypoint, frame;
    std::vector<float> values;
};

RasterField read_raster(const std::string& sidecar_path) {
    std::ifstream in(sidecar_path);
    if (!in) throw FormatError("cannot open pcm sidecar: " + sidecar_path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("pcm sidecar parse error: ") + e.what(),
                          static_cast<long>(e.byte));
    }
    RasterField f{};
    f.width = j.at("width").get<int>();
    f.height = j.at("height").get<int>();
    f.camera = j.at("camera").get<int>();
    f.person = j.at("person").get<int>();
    f.keypoint = j.at("keypoint").get<int>();
    f.frame = j.at("frame").get<int>();
    if (f.width <= 0 || f.height <= 0) throw FormatError("pcm sidecar: non-positive dimensions");

    const auto dir = std::filesystem::path(sidecar_path).parent_path();
    const std::string data_path = (dir / j.at("data").get<std::string>()).string();
    std::ifstream bin(data_path, std::ios::binary);
    if (!bin) throw FormatError("cannot open pcm raster: " + data_path);
    f.values.resize(static_cast<size_t>(f.width) * f.height);
    bin.read(reinterpret_cast<char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(float)));
    if (bin.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(float)))
        throw FormatError("pcm raster truncated: " + data_path, bin.gcount());
    return f;
}

}  // namespace

PcmSet load_raster(const std::string& sidecar_path, int cameras, int persons) {
    RasterField f = read_raster(sidecar_path);
    PcmSet set(cameras, persons, f.frame, PcmSet::Provenance::Raster);
    set.set_image_size(f.camera, f.width, f.height);
    set.set_raster(f.camera, f.person, f.keypoint, f.width, f.height, std::move(f.values));
    return set;
}

void load_raster_into(PcmSet& set, const std::string& sidecar_path) {
    RasterField f = read_raster(sidecar_path);
    if (f.frame != set.frame())
        throw FormatError("pcm sidecar frame " + std::to_string(f.frame) +
                          " does not match set frame " + std::to_string(set.frame()));
    set.set_image_size(f.camera, f.width, f.height);
    set.set_raster(f.camera, f.person, f.keypoint, f.width, f.height, std::move(f.values));
}

void save_raster(const std::string& directory, const std::string& stem, int camera, int person,
                 int keypoint, int frame, int width, int height,
                 const std::vector<float>& values) {
    if (static_cast<int>(values.size()) != width * height)
        throw FormatError("raster size mismatch");
    const auto dir = std::filesystem::path(directory);
    const std::string bin_name = stem + ".f32";
    {
        std::ofstream bin(dir / bin_name, std::ios::binary);
        if (!bin) throw FormatError("cannot write pcm raster: " + (dir / bin_name).string());
        bin.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
    }
    json j;
    j["width"] = width;
    j["height"] = height;
    j["camera"] = camera;
    j["person"] = person;
    j["keypoint"] = keypoint;
    j["frame"] = frame;
    j["data"] = bin_name;
    std::ofstream out(dir / (stem + ".json"));
    if (!out) throw FormatError("cannot write pcm sidecar");
    out << j.dump(2) << "\n";
}

}  // namespace mocap
