#pragma once

#include <memory>
#include <vector>

#include "diffhpe/diffusion.hpp"
#include "diffhpe/kernels.hpp"
#include "diffhpe/rng.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

struct DenoiserConfig {
    int num_blocks = 16;
    int channels = 64;  // C, width of the hidden embeddings
    double dropout = 0.0;
    int time_embedding_dim = 128;
    int condition_channels = 2;
    int time_kernel = 3;
    bool scale_skips = false;  // multiply the skip sum by 1/sqrt(num_blocks)

    void validate() const;
};

enum class RunMode { Train, Eval };

// Sinusoidal embedding of the diffusion step: all sines over geometrically
// spaced frequencies (1 down to 1e-4), then all cosines.
std::vector<double> time_embedding(int t, int dim);

// One gated residual block. Even blocks process the frame axis with depthwise
// convolutions; odd blocks process the joint axis with graph convolutions.
// Both finish with a graph non-local layer, a widening projection and a
// tanh/sigmoid gate feeding the residual and skip heads.
struct ResidualBlock {
    bool time_wise = false;
    LinearLayer step_proj;  // time_embedding_dim -> C
    TimeConvLayer tconv1, tconv2;
    GraphConvLayer gconv1, gconv2;
    BatchNormLayer bn1, bn2;
    NonLocalLayer non_local;
    LinearLayer mid;        // C -> 2C
    LinearLayer cond_proj;  // condition_channels -> 2C
    LinearLayer res_out;    // C -> C
    LinearLayer skip_out;   // C -> C

    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

struct BlockCache {
    Tensor x_in, h0;
    Tensor b1, r1, d1;
    Tensor b2, r2, d2;
    std::vector<uint8_t> drop1, drop2;
    BatchNormCache bnc1, bnc2;
    NonLocalCache nlc;
    Tensor nl_out;
    Tensor th, sg;  // tanh/sigmoid halves of the gate
    Tensor gate;
};

struct DenoiserWorkspace {
    std::vector<double> t_emb;
    Tensor e3d_pre;  // embedded pose before the trunk ReLU
    Tensor trunk_in;
    std::vector<BlockCache> blocks;
    Tensor skip_sum;  // after optional scaling, before ReLU
    Tensor y1, o1, y2;
};

// The noise-predicting network: trainable 3D embedding w_theta, gated
// residual blocks alternating time-wise and joint-wise processing, and a
// skip-sum output head. The last output layer starts at zero, so a fresh
// model predicts zero noise.
struct Denoiser {
    DenoiserConfig config;
    SkeletonGraph skeleton;
    NeighborIndex neighbors;

    LinearLayer w_theta;  // 3 -> C, shared input projection / 3D embedding
    std::vector<ResidualBlock> blocks;
    LinearLayer out1;  // C -> C
    LinearLayer out2;  // C -> 3, zero-initialized

    static Denoiser create(const DenoiserConfig& cfg, const SkeletonGraph& graph, uint64_t init_seed);

    // Structure clone with every array zeroed; used as a gradient buffer.
    Denoiser zeros_like() const;

    void collect(std::vector<ArrayRef>& out);
    size_t trainable_count();
};

// eps_hat from the embedded noisy pose and the conditioner tensor. Training
// mode uses per-clip batch statistics and needs an rng when dropout > 0; a
// workspace is required whenever a backward pass will follow.
Pose3D predict_noise(const Denoiser& d, const Tensor& e3d, const Tensor& cond, int t, RunMode mode,
                     Rng* dropout_rng = nullptr, DenoiserWorkspace* ws = nullptr);

// Backpropagates d_eps through the trunk, accumulating parameter gradients
// into `grads` (a zeros_like clone) and the gradient w.r.t. the embedded pose
// into d_e3d (zeroed here). The caller chains w_theta via linear_backward.
void predict_noise_backward(const Denoiser& d, const DenoiserWorkspace& ws, const Tensor& cond,
                            const Pose3D& d_eps, Denoiser& grads, Tensor& d_e3d);

// NoisePredictor adapter used by the reverse sampler: embeds the pose with
// w_theta and runs the trunk in eval mode (frozen batch-norm, no dropout).
class DenoiserSampler : public NoisePredictor {
  public:
    explicit DenoiserSampler(const Denoiser& d) : d_(d) {}
    Pose3D predict(const Pose3D& x3d_t, const Tensor& cond, int t) const override;

  private:
    const Denoiser& d_;
};

}  // namespace diffhpe
