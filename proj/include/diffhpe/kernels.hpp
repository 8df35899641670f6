#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffhpe/rng.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

// Named view into a layer's arrays, used for checkpointing, the optimizer and
// gradient pairing. Collection order is the canonical parameter order.
struct ArrayRef {
    std::string name;
    std::vector<double>* data;
    bool trainable;
};

// All backward kernels accumulate: grads with +=, and dx with += when a
// non-null dx is given. Callers zero the buffers at the start of a batch.

// Per-position channel map y = W x + b, weights shared across frames/joints.
struct LinearLayer {
    int in_ch = 0, out_ch = 0;
    std::vector<double> W;  // [out][in]
    std::vector<double> b;  // [out]

    void resize(int in, int out);
    void init_uniform(Rng& rng);  // U(+-1/sqrt(in_ch)), PyTorch-style
    void zero();
    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

void linear_forward(const LinearLayer& p, const Tensor& x, Tensor& y);
void linear_backward(const LinearLayer& p, const Tensor& x, const Tensor& dy, LinearLayer& grad,
                     Tensor* dx);

// Depthwise 1-D convolution along the frame axis, one kernel per channel,
// replicate padding at the clip boundaries (keeps constant-in-time inputs
// exactly constant in time).
struct TimeConvLayer {
    int ch = 0, kernel = 3;
    std::vector<double> W;  // [ch][kernel]
    std::vector<double> b;  // [ch]

    void resize(int channels, int kernel_size);
    void init_uniform(Rng& rng);
    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

void time_conv_forward(const TimeConvLayer& p, const Tensor& x, Tensor& y);
void time_conv_backward(const TimeConvLayer& p, const Tensor& x, const Tensor& dy,
                        TimeConvLayer& grad, Tensor* dx);

// Flattened neighbor lists of a skeleton, with 1/degree factors for the
// pre-aggregation mean.
struct NeighborIndex {
    int J = 0;
    std::vector<int> offsets;  // J + 1
    std::vector<int> nbrs;
    std::vector<double> inv_deg;

    static NeighborIndex build(const SkeletonGraph& graph);
};

// Pre-aggregated graph convolution with decoupled self-connections:
// y_j = W_self x_j + W_nbr mean_{i in N(j)} x_i + b.
struct GraphConvLayer {
    int in_ch = 0, out_ch = 0;
    std::vector<double> W_self;  // [out][in]
    std::vector<double> W_nbr;   // [out][in]
    std::vector<double> b;       // [out]

    void resize(int in, int out);
    void init_uniform(Rng& rng);
    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

void graph_conv_forward(const GraphConvLayer& p, const NeighborIndex& nbr, const Tensor& x,
                        Tensor& y);
void graph_conv_backward(const GraphConvLayer& p, const NeighborIndex& nbr, const Tensor& x,
                         const Tensor& dy, GraphConvLayer& grad, Tensor* dx);

// Per-channel batch normalization over the (frame, joint) positions of one
// clip. Training mode normalizes with the clip statistics; eval mode uses the
// running buffers, which the trainer refreshes once per optimizer step.
struct BatchNormLayer {
    int ch = 0;
    double eps = 1e-5;
    std::vector<double> gamma, beta;         // trained
    std::vector<double> run_mean, run_var;   // buffers

    void resize(int channels);
    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

struct BatchNormCache {
    std::vector<double> mean, inv_std;  // per channel
    Tensor xhat;
};

void batchnorm_forward(const BatchNormLayer& p, const Tensor& x, Tensor& y, bool training,
                       BatchNormCache* cache);
void batchnorm_backward(const BatchNormLayer& p, const BatchNormCache& cache, const Tensor& dy,
                        BatchNormLayer& grad, Tensor* dx);

void relu_forward(const Tensor& x, Tensor& y);
void relu_backward(const Tensor& x_pre, const Tensor& dy, Tensor& dx);

// Inverted dropout; mask entries are 0 or 1, kept activations scaled by
// 1/(1-rate) at training time.
void dropout_forward(const Tensor& x, double rate, Rng& rng, Tensor& y, std::vector<uint8_t>& mask);
void dropout_backward(const std::vector<uint8_t>& mask, double rate, const Tensor& dy, Tensor& dx);

// Residual non-local attention over the joints of each frame:
// y = x + W_out (softmax(theta(x) phi(x)^T) g(x)). W_out starts at zero so a
// fresh layer is the identity.
struct NonLocalLayer {
    int ch = 0, inner = 0;
    LinearLayer theta, phi, g, out;

    void resize(int channels);
    void init(Rng& rng);
    void collect(std::vector<ArrayRef>& out, const std::string& prefix);
};

struct NonLocalCache {
    Tensor q, k, v, attn, u;  // attn is L x J x J
};

void non_local_forward(const NonLocalLayer& p, const Tensor& x, Tensor& y, NonLocalCache* cache);
void non_local_backward(const NonLocalLayer& p, const Tensor& x, const NonLocalCache& cache,
                        const Tensor& dy, NonLocalLayer& grad, Tensor* dx);

}  // namespace diffhpe
