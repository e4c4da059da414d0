#pragma once

#include "mocap/camera.hpp"
#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mocap {

class MotionSequence;

/// One Gaussian blob of a synthetic confidence field.
struct PcmBlob {
    Vec2 center = Vec2::Zero();
    double amplitude = 1.0;
    double sigma = 8.0;
};

/// The strongest local peak of a field, used to seed initialization.
struct PcmPeak {
    Vec2 pixel = Vec2::Zero();
    double confidence = 0.0;
};

/// Per-frame part-confidence maps for every (camera, person, keypoint),
/// queryable at continuous pixel coordinates with values in [0, 1].
/// Out-of-image queries return 0. Immutable per frame; concurrent queries
/// are safe.
///
/// Two sources: analytic Gaussian mixtures (synthetic oracle) and raster
/// grids with bilinear interpolation.
class PcmSet {
  public:
    enum class Provenance { Synthetic, Raster };

    PcmSet(int cameras, int persons, int frame, Provenance provenance);

    double query(int camera, int person, int keypoint, const Vec2& pixel) const;

    /// Strongest blob (synthetic) or maximal texel (raster); nullopt when
    /// the field is empty/all-zero.
    std::optional<PcmPeak> peak(int camera, int person, int keypoint) const;

    int frame() const { return frame_; }
    int camera_count() const { return cameras_; }
    int person_count() const { return persons_; }
    Provenance provenance() const { return provenance_; }

    /// Mutators used by generators/loaders.
    void set_image_size(int camera, int width, int height);
    void add_blob(int camera, int person, int keypoint, const PcmBlob& blob);
    void set_raster(int camera, int person, int keypoint, int width, int height,
                    std::vector<float> values);

  private:
    struct Field {
        std::vector<PcmBlob> blobs;       // synthetic
        std::vector<float> grid;          // raster, row-major
        int grid_w = 0, grid_h = 0;
    };

    int index_of(int camera, int person, int keypoint) const;

    int cameras_, persons_, frame_;
    Provenance provenance_;
    std::vector<std::pair<int, int>> image_sizes_;  // per camera
    std::vector<Field> fields_;
};

/// Configuration of the synthetic PCM oracle. It stands in for the 2D
/// pose network: blobs are placed at projected ground-truth keypoints,
/// degraded by the configured noise, dropout, false positives, and
/// occlusion confusion. Deterministic per seed.
struct SyntheticSceneConfig {
    const CameraRig* rig = nullptr;
    const SkeletonModel* skeleton = nullptr;          // supplies the keypoint map
    std::vector<const MotionSequence*> ground_truth;  // one per person
    double blob_sigma_px = 8.0;
    double amplitude = 1.0;
    double center_noise_px = 0.0;   // gaussian sigma on blob centers
    double dropout = 0.0;           // probability a blob is omitted
    int false_positives = 0;        // extra blobs per (camera, person) image
    double false_positive_amplitude = 0.8;
    bool occlusion_confusion = false;
    double confusion_radius_px = 15.0;  // projections closer than this may swap
    std::uint64_t seed = 1;

    void validate() const;
};

/// Builds the per-frame confidence fields from ground truth. With zero
/// noise/dropout/false positives every blob center equals the exact
/// ground-truth projection.
PcmSet generate_synthetic(const SyntheticSceneConfig& cfg, int frame);

/// Loads one raster field (little-endian float32, row-major) described by
/// a JSON sidecar {width, height, camera, person, keypoint, frame, data}.
/// Values are clamped to [0, 1]. Throws FormatError (with byte offset) on
/// dimension or size mismatch.
PcmSet load_raster(const std::string& sidecar_path, int cameras, int persons);

/// Adds one sidecar-described raster field to an existing set; the frame
/// index must match.
void load_raster_into(PcmSet& set, const std::string& sidecar_path);

/// Writes a raster field plus sidecar; `stem` names both files.
void save_raster(const std::string& directory, const std::string& stem, int camera, int person,
                 int keypoint, int frame, int width, int height,
                 const std::vector<float>& values);

}  // namespace mocap
