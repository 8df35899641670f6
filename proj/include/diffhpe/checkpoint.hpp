#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "diffhpe/conditioning.hpp"
#include "diffhpe/data.hpp"
#include "diffhpe/denoiser.hpp"
#include "diffhpe/schedule.hpp"

namespace diffhpe {

// Single-file container: 8-byte magic, little-endian u64 header length, JSON
// header (kind, config, schedule, normalization, array manifest with dtype
// and shape), then the raw float64 payload.

inline constexpr char kCheckpointMagic[9] = "DHPECK01";

// Optimizer/progress state stored alongside a diffusion model so training can
// resume with continued epoch numbering.
struct TrainerState {
    int epoch = 0;
    double learning_rate = 0.0;
    double best_metric = 0.0;
    int best_epoch = 0;
    double plateau_best = 0.0;
    int plateau_bad_count = 0;
    int64_t adam_step = 0;
    std::vector<double> adam_m, adam_v;
};

struct DiffusionCheckpoint {
    Denoiser denoiser;
    VarianceSchedule schedule;
    NormalizationStats stats;
    ConditionMode mode = ConditionMode::Raw2D;
    std::optional<TrainerState> trainer_state;
};

struct BackboneCheckpoint {
    ToyBackbone backbone;
    NormalizationStats stats;
};

std::string checkpoint_kind(const std::string& path);  // "diffusion" | "backbone" | "gt_stub"

void save_diffusion_checkpoint(const std::string& path, Denoiser& model,
                               const VarianceSchedule& schedule, const NormalizationStats& stats,
                               ConditionMode mode, const TrainerState* trainer_state = nullptr);
DiffusionCheckpoint load_diffusion_checkpoint(const std::string& path);

void save_backbone_checkpoint(const std::string& path, ToyBackbone& backbone,
                              const NormalizationStats& stats);
BackboneCheckpoint load_backbone_checkpoint(const std::string& path);

// Marker container for the ground-truth passthrough evaluator.
void save_gt_stub_checkpoint(const std::string& path);

}  // namespace diffhpe
