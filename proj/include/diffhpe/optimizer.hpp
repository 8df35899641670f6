#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "diffhpe/kernels.hpp"

namespace diffhpe {

// Adam over the trainable arrays of a collect() traversal. Weight decay is
// added to the gradient (L2 style). Moments are stored flat in traversal
// order so they can be checkpointed as two named arrays.
class Adam {
  public:
    Adam(double beta1, double beta2, double eps, double weight_decay);

    void attach(const std::vector<ArrayRef>& params);  // sizes the moment buffers
    void step(const std::vector<ArrayRef>& params, const std::vector<ArrayRef>& grads, double lr);

    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }
    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }

  private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::vector<double> m_, v_;
    int64_t step_ = 0;
};

// Plateau policy on a lower-is-better metric: after `patience` consecutive
// evaluations without improvement the learning rate is divided by `factor`
// (once per plateau; the counter restarts after each cut).
struct PlateauScheduler {
    double factor = 2.0;
    int patience = 5;
    double best = std::numeric_limits<double>::infinity();
    int bad_count = 0;

    double update(double lr, double metric) {
        if (metric < best) {
            best = metric;
            bad_count = 0;
            return lr;
        }
        if (++bad_count >= patience) {
            bad_count = 0;
            return lr / factor;
        }
        return lr;
    }
};

}  // namespace diffhpe
