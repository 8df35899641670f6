#pragma once

// Naive serial reimplementations of the library's numeric kernels and
// metrics. These are deliberately written the slow, obvious way (dense
// adjacency products, explicit triple loops, no threading) and are kept
// independent of the optimized code paths so the test and benchmark targets
// can use them as oracles.

#include "diffhpe/kernels.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe::reference {

// Dense D^-1 A aggregation followed by the two linear maps.
Tensor graph_conv(const GraphConvLayer& p, const SkeletonGraph& graph, const Tensor& x);

// Direct convolution sum with replicate padding, one kernel per channel.
Tensor time_conv(const TimeConvLayer& p, const Tensor& x);

// Double-loop attention without the softmax max-shift trick.
Tensor non_local(const NonLocalLayer& p, const Tensor& x);

// Per-position matrix product.
Tensor linear(const LinearLayer& p, const Tensor& x);

// Per-edge Euclidean distances (meters in, millimeters out).
Matrix segment_lengths(const Pose3D& pose, const SkeletonGraph& graph);

// Protocol-1 error with an explicit per-joint loop.
double mpjpe(const Pose3D& pred, const Pose3D& gt, int root_index);

// Triple-loop forms of the coherence metrics.
double symmetry_gap(const std::vector<Pose3D>& preds, const SkeletonGraph& graph);
double temporal_std(const std::vector<Pose3D>& preds, const SkeletonGraph& graph);

}  // namespace diffhpe::reference
