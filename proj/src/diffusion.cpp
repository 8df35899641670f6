#include "diffhpe/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "diffhpe/parallel.hpp"

namespace diffhpe {

Pose3D forward_sample(const Pose3D& x0, int t, const Pose3D& noise, const VarianceSchedule& sched) {
    sched.check_step(t, "forward_sample");
    check_same_shape(x0, noise, "forward_sample");
    const double a = std::sqrt(sched.abar(t));
    const double b = std::sqrt(1.0 - sched.abar(t));
    Pose3D out = x0;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a * x0.v[i] + b * noise.v[i];
    return out;
}

Pose3D forward_step(const Pose3D& x_prev, int t, const Pose3D& noise, const VarianceSchedule& sched) {
    sched.check_step(t, "forward_step");
    check_same_shape(x_prev, noise, "forward_step");
    const double a = std::sqrt(1.0 - sched.beta(t));
    const double b = std::sqrt(sched.beta(t));
    Pose3D out = x_prev;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a * x_prev.v[i] + b * noise.v[i];
    return out;
}

Pose3D reverse_step(const Pose3D& x_t, const Pose3D& eps_hat, int t, const VarianceSchedule& sched,
                    Rng& rng) {
    sched.check_step(t, "reverse_step");
    check_same_shape(x_t, eps_hat, "reverse_step");
    const double k1 = sched.k1_at(t);
    const double k2 = sched.k2_at(t);
    Pose3D out = x_t;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = k1 * (x_t.v[i] - k2 * eps_hat.v[i]);
    if (t > 1) {
        const double sd = std::sqrt(sched.sigma2_at(t));
        if (sd > 0.0)
            for (size_t i = 0; i < out.size(); ++i) out.v[i] += sd * rng.normal();
    }
    return out;
}

std::vector<Pose3D> sample_hypotheses(const NoisePredictor& denoiser, const Tensor& cond, int H,
                                      const VarianceSchedule& sched, const SeedSequence& seeds,
                                      uint64_t stream_tag) {
    if (H < 1) throw std::invalid_argument("sample_hypotheses: need H >= 1");
    const int L = cond.d0, J = cond.d1;
    std::vector<Pose3D> hyps(H);
    par::for_each_index(H, [&](int h) {
        Rng rng = seeds.stream(stream_tag, static_cast<uint64_t>(h));
        Pose3D x(L, J, 3);
        for (size_t i = 0; i < x.size(); ++i) x.v[i] = rng.normal();
        for (int t = sched.T; t >= 1; --t) {
            Pose3D eps_hat = denoiser.predict(x, cond, t);
            x = reverse_step(x, eps_hat, t, sched, rng);
        }
        hyps[h] = std::move(x);
    });
    return hyps;
}

Pose3D aggregate(const std::vector<Pose3D>& hypotheses) {
    if (hypotheses.empty()) throw std::invalid_argument("aggregate: need at least one hypothesis");
    Pose3D mean = hypotheses[0];
    for (size_t h = 1; h < hypotheses.size(); ++h) {
        check_same_shape(mean, hypotheses[h], "aggregate");
        for (size_t i = 0; i < mean.size(); ++i) mean.v[i] += hypotheses[h].v[i];
    }
    const double inv = 1.0 / static_cast<double>(hypotheses.size());
    for (size_t i = 0; i < mean.size(); ++i) mean.v[i] *= inv;
    return mean;
}

}  // namespace diffhpe
