#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffhpe/checkpoint.hpp"
#include "diffhpe/conditioning.hpp"
#include "diffhpe/data.hpp"
#include "diffhpe/denoiser.hpp"
#include "diffhpe/occlusion.hpp"
#include "diffhpe/optimizer.hpp"
#include "diffhpe/schedule.hpp"

namespace diffhpe {

struct SchedulerConfig {
    std::string type = "plateau";
    double factor = 2.0;
    int patience = 5;  // evaluations without improvement before a cut
};

struct TrainConfig {
    int batch_size = 200;
    double learning_rate = 8.0e-4;
    double dropout = 0.03;
    int epochs = 1000;
    int T = 50;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double weight_decay = 1e-6;
    SchedulerConfig scheduler;
    std::string mode = "diffhpe_2d";  // diffhpe_2d | diffhpe_wrapper
    OcclusionSpec occlusion;
    uint64_t seed = 0;

    int sequence_length = 27;
    int stride = 1;
    int eval_every = 10;       // evaluation cadence in epochs
    int eval_hypotheses = 1;   // H used for checkpoint selection
    std::string checkpoint_selection = "val";  // "test" mimics test-set selection
    bool resample_occlusion = true;            // false: one fixed mask per clip

    int num_blocks = 16;
    int channels = 64;
    int time_embedding_dim = 128;
    int time_kernel = 3;
    bool scale_skips = false;

    std::string schedule_kind = "quadratic";
    double beta_min = 1e-4;
    double beta_max = 0.5;
    std::string reverse_variance = "posterior";

    std::string dataset;              // dataset directory
    std::string backbone_checkpoint;  // wrapper mode conditioning
    std::string out;                  // output directory ("" = keep in memory)

    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig from_json_file(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;

    DenoiserConfig denoiser_config(int condition_channels) const;
    VarianceSchedule make_variance_schedule() const;
};

struct TrainLogEntry {
    int epoch = 0;
    double loss = 0.0;
    double eval_mpjpe_mm = 0.0;
    double learning_rate = 0.0;
};

struct FitResult {
    std::vector<TrainLogEntry> log;
    int best_epoch = 0;
    double best_eval_mpjpe_mm = 0.0;
    Denoiser best_model;
    std::string best_checkpoint_path, last_checkpoint_path, log_path;
};

// Owns one training run: the epoch-step loop of the diffusion objective
// (sample t, noise the target, predict the noise, L2 on the residual),
// periodic sampling-based evaluation, plateau scheduling and checkpointing.
// Batch clips are processed in parallel with per-worker gradient buffers
// merged in worker order; every random draw comes from a stream keyed by
// (epoch, clip), so a run is reproducible for a fixed thread count.
class Trainer {
  public:
    Trainer(const TrainConfig& cfg, const Dataset& dataset, Denoiser& model,
            const LiftingBackbone* backbone);

    // One optimizer step over the given training-clip indices; returns the
    // batch loss (mean squared error per coordinate).
    double train_step(const std::vector<int>& clip_indices, uint64_t epoch_tag);

    FitResult fit();

    // Mean MPJPE (mm) of aggregated H-hypothesis predictions over a split,
    // under this trainer's occlusion spec.
    double eval_mpjpe(const std::string& split_name, int hypotheses);

    void restore(const TrainerState& state);

    const NormalizationStats& stats() const { return stats_; }
    const VarianceSchedule& schedule() const { return sched_; }
    double learning_rate() const { return lr_; }
    int start_epoch() const { return start_epoch_; }

  private:
    struct ClipData {
        PoseClip clip;
        Pose3D x3d_model;
        std::vector<std::array<double, 3>> root_trajectory;
        OcclusionMask fixed_mask;
    };

    Tensor make_conditioner(const Pose2D& x2d_masked, ImageSize size) const;
    void divergence_dump(double loss, int epoch);

    TrainConfig cfg_;
    const Dataset& dataset_;
    Denoiser& model_;
    const LiftingBackbone* backbone_;
    VarianceSchedule sched_;
    NormalizationStats stats_;
    SeedSequence seeds_;
    Adam adam_;
    double lr_;
    PlateauScheduler plateau_;
    int start_epoch_ = 0;

    std::vector<ClipData> train_clips_;
    std::vector<ClipData> eval_clips_;
    std::string eval_split_;

    std::vector<Denoiser> grad_buffers_;
    std::vector<DenoiserWorkspace> workspaces_;
};

struct ToyFitOptions {
    int epochs = 300;
    double learning_rate = 5e-3;
    int batch_size = 32;
    uint64_t seed = 1;
    OcclusionSpec occlusion;
    int sequence_length = 27;
    int stride = 1;
};

// Ordinary supervised regression of the toy backbone on model-space targets.
// Returns the final training MSE. Throws if the backbone is frozen.
double fit_toy_backbone(ToyBackbone& backbone, const Dataset& dataset,
                        const NormalizationStats& stats, const ToyFitOptions& opt);

}  // namespace diffhpe
