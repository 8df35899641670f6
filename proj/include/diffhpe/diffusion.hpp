#pragma once

#include <vector>

#include "diffhpe/rng.hpp"
#include "diffhpe/schedule.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

// Anything that can play the role of the noise predictor during reverse
// diffusion. x3d_t is the noisy model-space pose, cond the conditioner tensor.
struct NoisePredictor {
    virtual ~NoisePredictor() = default;
    virtual Pose3D predict(const Pose3D& x3d_t, const Tensor& cond, int t) const = 0;
};

// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
Pose3D forward_sample(const Pose3D& x0, int t, const Pose3D& noise, const VarianceSchedule& sched);

// One iterated forward step x_{t-1} -> x_t: sqrt(1-beta_t) x + sqrt(beta_t) z.
Pose3D forward_step(const Pose3D& x_prev, int t, const Pose3D& noise, const VarianceSchedule& sched);

// mu = k1_t (x_t - k2_t eps_hat); adds sqrt(sigma2_t) z for t > 1, returns mu
// exactly at t = 1.
Pose3D reverse_step(const Pose3D& x_t, const Pose3D& eps_hat, int t, const VarianceSchedule& sched,
                    Rng& rng);

// H independent reverse trajectories from fresh Gaussian noise, each calling
// the predictor at every step from T down to 1 with the same conditioner.
// Hypothesis h draws from seeds.stream(stream_tag, h), so results are
// reproducible and independent of how the loop is scheduled across threads.
std::vector<Pose3D> sample_hypotheses(const NoisePredictor& denoiser, const Tensor& cond, int H,
                                      const VarianceSchedule& sched, const SeedSequence& seeds,
                                      uint64_t stream_tag = 0);

// Element-wise mean of the hypotheses.
Pose3D aggregate(const std::vector<Pose3D>& hypotheses);

}  // namespace diffhpe
