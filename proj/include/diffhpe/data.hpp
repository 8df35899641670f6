#pragma once

#include <array>
#include <string>
#include <vector>

#include "diffhpe/conditioning.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

struct CameraModel {
    double fx = 1100.0, fy = 1100.0;
    double cx = 500.0, cy = 500.0;
    ImageSize image{1000.0, 1000.0};

    void project(const double* xyz, double* uv) const {
        uv[0] = fx * xyz[0] / xyz[2] + cx;
        uv[1] = fy * xyz[1] / xyz[2] + cy;
    }
};

struct ClipMeta {
    int track_id = 0;
    int subject = 0, action = 0, camera = 0;
    ImageSize image_size;
};

// One windowed training/eval example: pixel-space 2D and camera-space 3D
// (meters) over L frames.
struct PoseClip {
    Pose2D x2d;
    Pose3D x3d;
    ClipMeta meta;
};

struct Track {
    int id = 0;
    int subject = 0, action = 0, camera = 0;
    Pose2D x2d;
    Pose3D x3d;
    int length() const { return x2d.d0; }
};

struct Dataset {
    SkeletonGraph skeleton;
    CameraModel camera;
    std::vector<Track> tracks;
    std::vector<int> train_ids, val_ids, test_ids;

    const Track& track_by_id(int id) const;
    const std::vector<int>& split(const std::string& name) const;
    // Windowed clips of every track in a split, in ascending track order.
    std::vector<PoseClip> clips(const std::string& split_name, int L, int stride) const;
};

// Root-relative standardization of the 3D targets. Stats are fitted on the
// training split only (non-root joints) and carry their provenance so eval
// code can assert nothing leaked.
struct NormalizationStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> std{1.0, 1.0, 1.0};
    std::string fitted_on;  // split name

    void validate() const;
};

NormalizationStats fit_stats(const Dataset& ds, const std::string& split_name, int L, int stride);

struct ModelSpaceClip {
    Tensor x2d_norm;    // L x J x 2, width-scaled normalization
    Pose3D x3d_model;   // L x J x 3, root-relative standardized; root row is 0
    std::vector<std::array<double, 3>> root_trajectory;  // meters, per frame
};

ModelSpaceClip to_model_space(const PoseClip& clip, const NormalizationStats& stats, int root_index);
Pose3D from_model_space(const Pose3D& x3d_model,
                        const std::vector<std::array<double, 3>>& root_trajectory,
                        const NormalizationStats& stats, int root_index);

// Overlapping windows at the given stride; the final partial window is
// dropped. Throws when the track is shorter than L.
std::vector<PoseClip> window(const Track& track, ImageSize image_size, int L, int stride);

// Smooth random kinematic-chain motion with fixed, sagittally symmetric bone
// lengths, projected through the pinhole camera. Ground truth therefore has
// zero symmetry gap and zero temporal segment-length deviation, and the 2D is
// exactly consistent with the 3D. Same seed, same dataset, bit for bit.
Dataset synthetic_dataset(uint64_t seed, int num_tracks, int track_length,
                          const SkeletonGraph& skeleton, const CameraModel& camera);

// Directory container: manifest.json plus one little-endian float32 array
// file per track per field.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);
Dataset load_external(const std::string& path, const std::string& format_tag);

}  // namespace diffhpe
