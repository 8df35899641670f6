#include "diffhpe/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace diffhpe {

Adam::Adam(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::attach(const std::vector<ArrayRef>& params) {
    size_t n = 0;
    for (const auto& p : params)
        if (p.trainable) n += p.data->size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    step_ = 0;
}

void Adam::step(const std::vector<ArrayRef>& params, const std::vector<ArrayRef>& grads, double lr) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: parameter/gradient traversals differ");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    size_t off = 0;
    for (size_t a = 0; a < params.size(); ++a) {
        if (!params[a].trainable) continue;
        auto& w = *params[a].data;
        const auto& g = *grads[a].data;
        if (w.size() != g.size()) throw std::invalid_argument("adam: array size mismatch");
        for (size_t i = 0; i < w.size(); ++i, ++off) {
            const double grad = g[i] + weight_decay_ * w[i];
            m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * grad;
            v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * grad * grad;
            const double mhat = m_[off] / bc1;
            const double vhat = v_[off] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
    if (off != m_.size()) throw std::logic_error("adam: moment buffers out of sync with parameters");
}

}  // namespace diffhpe
