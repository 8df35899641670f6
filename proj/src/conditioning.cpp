#include "diffhpe/conditioning.hpp"

#include <stdexcept>

namespace diffhpe {

std::string to_string(ConditionMode m) { return m == ConditionMode::Raw2D ? "raw2d" : "wrapper"; }

ConditionerOutput condition_raw2d(const Pose2D& x2d, ImageSize size) {
    if (!(size.w > 0.0) || !(size.h > 0.0))
        throw std::invalid_argument("condition_raw2d: image size must be positive");
    if (x2d.d2 != 2) throw std::invalid_argument("condition_raw2d: expected L x J x 2 input");
    ConditionerOutput out;
    out.mode = ConditionMode::Raw2D;
    out.tensor = Tensor(x2d.d0, x2d.d1, 2);
    const double aspect = size.h / size.w;
    for (int l = 0; l < x2d.d0; ++l)
        for (int j = 0; j < x2d.d1; ++j) {
            const double* p = x2d.row(l, j);
            double* q = out.tensor.row(l, j);
            q[0] = 2.0 * p[0] / size.w - 1.0;
            q[1] = 2.0 * p[1] / size.w - aspect;
        }
    return out;
}

Pose2D denormalize_raw2d(const Tensor& normalized, ImageSize size) {
    Pose2D out(normalized.d0, normalized.d1, 2);
    const double aspect = size.h / size.w;
    for (int l = 0; l < normalized.d0; ++l)
        for (int j = 0; j < normalized.d1; ++j) {
            const double* q = normalized.row(l, j);
            double* p = out.row(l, j);
            p[0] = (q[0] + 1.0) * size.w / 2.0;
            p[1] = (q[1] + aspect) * size.w / 2.0;
        }
    return out;
}

ConditionerOutput condition_wrapper(const Pose2D& x2d, ImageSize size,
                                    const LiftingBackbone& backbone) {
    if (!backbone.frozen())
        throw std::logic_error("condition_wrapper: backbone must be frozen before conditioning");
    ConditionerOutput out;
    out.mode = ConditionMode::Wrapper;
    out.tensor = backbone.features(x2d, size);
    if (out.tensor.d2 != backbone.feature_channels())
        throw std::runtime_error("condition_wrapper: backbone returned " +
                                 std::to_string(out.tensor.d2) + " channels, declared " +
                                 std::to_string(backbone.feature_channels()));
    return out;
}

Tensor embed_noisy_pose(const Pose3D& x3d_t, const LinearLayer& w_theta) {
    if (x3d_t.d2 != w_theta.in_ch)
        throw std::invalid_argument("embed_noisy_pose: pose channels do not match w_theta");
    Tensor out(x3d_t.d0, x3d_t.d1, w_theta.out_ch);
    linear_forward(w_theta, x3d_t, out);
    return out;
}

ToyBackbone::ToyBackbone(const SkeletonGraph& graph, uint64_t seed)
    : skeleton_(graph), neighbors_(NeighborIndex::build(graph)) {
    Rng rng(SeedSequence(seed).derive(0xb0b0));
    input.resize(2, kFeatureChannels);
    input.init_uniform(rng);
    gcn.resize(kFeatureChannels, kFeatureChannels);
    gcn.init_uniform(rng);
    head.resize(kFeatureChannels, 3);
    head.init_uniform(rng);
}

void ToyBackbone::check_mutable() const {
    if (frozen_) throw std::logic_error("toy backbone is frozen; parameter updates are not allowed");
}

void ToyBackbone::collect(std::vector<ArrayRef>& out) {
    input.collect(out, "input");
    gcn.collect(out, "gcn");
    head.collect(out, "head");
}

void ToyBackbone::forward_normalized(const Tensor& x2d_norm, Tensor& lin_out, Tensor& feat,
                                     Tensor& feat_relu, Pose3D& pred) const {
    const int L = x2d_norm.d0, J = x2d_norm.d1;
    lin_out = Tensor(L, J, kFeatureChannels);
    linear_forward(input, x2d_norm, lin_out);
    feat = Tensor(L, J, kFeatureChannels);
    graph_conv_forward(gcn, neighbors_, lin_out, feat);
    feat_relu = Tensor(L, J, kFeatureChannels);
    relu_forward(feat, feat_relu);
    pred = Pose3D(L, J, 3);
    linear_forward(head, feat_relu, pred);
}

Tensor ToyBackbone::features(const Pose2D& x2d, ImageSize size) const {
    const Tensor norm = condition_raw2d(x2d, size).tensor;
    Tensor lin_out(norm.d0, norm.d1, kFeatureChannels);
    linear_forward(input, norm, lin_out);
    Tensor feat(norm.d0, norm.d1, kFeatureChannels);
    graph_conv_forward(gcn, neighbors_, lin_out, feat);
    return feat;
}

Pose3D ToyBackbone::predict_model_space(const Pose2D& x2d, ImageSize size) const {
    Tensor lin_out, feat, feat_relu;
    Pose3D pred;
    forward_normalized(condition_raw2d(x2d, size).tensor, lin_out, feat, feat_relu, pred);
    return pred;
}

}  // namespace diffhpe
