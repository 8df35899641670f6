#pragma once

#include <memory>
#include <string>

#include "diffhpe/kernels.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

struct ImageSize {
    double w = 1000.0;
    double h = 1000.0;
};

enum class ConditionMode { Raw2D, Wrapper };

std::string to_string(ConditionMode m);

// Conditioner tensor fed to the denoiser at every diffusion step: normalized
// pixel coordinates (2 channels) in raw-2D mode, frozen backbone features in
// wrapper mode.
struct ConditionerOutput {
    Tensor tensor;  // L x J x C_cond
    ConditionMode mode = ConditionMode::Raw2D;
};

// Width-scaled, aspect-preserving normalization: x' = 2x/w - 1,
// y' = 2y/w - h/w. Occluded keypoints (pixel 0) normalize like any other
// value; no visibility channel is added.
ConditionerOutput condition_raw2d(const Pose2D& x2d, ImageSize size);

// Exact inverse of condition_raw2d's mapping.
Pose2D denormalize_raw2d(const Tensor& normalized, ImageSize size);

// Frozen, pre-trained lifting model: feature map h* and optional linear
// regression head g*. Implementations must be deterministic once frozen.
class LiftingBackbone {
  public:
    virtual ~LiftingBackbone() = default;
    virtual int feature_channels() const = 0;
    virtual bool frozen() const = 0;
    // h*: pixel-space clip -> L x J x C_feat features.
    virtual Tensor features(const Pose2D& x2d, ImageSize size) const = 0;
    virtual bool has_head() const = 0;
    // g* o h*: model-space (root-relative standardized) 3D prediction.
    virtual Pose3D predict_model_space(const Pose2D& x2d, ImageSize size) const = 0;
};

ConditionerOutput condition_wrapper(const Pose2D& x2d, ImageSize size,
                                    const LiftingBackbone& backbone);

// E3D_t = w_theta(x3d_t): per-joint linear 3 -> C applied to every frame.
Tensor embed_noisy_pose(const Pose3D& x3d_t, const LinearLayer& w_theta);

// Desk-scale stand-in for a pre-trained lifting network: per-joint 2 -> 16
// linear map followed by one graph convolution (features), with a linear head
// on ReLU(features) for the 3D prediction. Train it with fit_toy_backbone,
// then freeze.
class ToyBackbone : public LiftingBackbone {
  public:
    static constexpr int kFeatureChannels = 16;

    ToyBackbone(const SkeletonGraph& graph, uint64_t seed);

    int feature_channels() const override { return kFeatureChannels; }
    bool frozen() const override { return frozen_; }
    Tensor features(const Pose2D& x2d, ImageSize size) const override;
    bool has_head() const override { return true; }
    Pose3D predict_model_space(const Pose2D& x2d, ImageSize size) const override;

    void freeze() { frozen_ = true; }
    // Throws std::logic_error once frozen; training goes through this.
    void check_mutable() const;
    void collect(std::vector<ArrayRef>& out);

    const SkeletonGraph& skeleton() const { return skeleton_; }

    // Parameters are exposed for the fitting loop and for tests that build
    // hand-crafted backbones; call check_mutable() before writing.
    LinearLayer input;    // 2 -> C_feat
    GraphConvLayer gcn;   // C_feat -> C_feat
    LinearLayer head;     // C_feat -> 3

    // Forward pass on normalized 2D input with intermediates, used by the
    // fitting loop. feat is pre-activation h*.
    void forward_normalized(const Tensor& x2d_norm, Tensor& lin_out, Tensor& feat, Tensor& feat_relu,
                            Pose3D& pred) const;

  private:
    SkeletonGraph skeleton_;
    NeighborIndex neighbors_;
    bool frozen_ = false;
};

}  // namespace diffhpe
