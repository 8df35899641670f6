#include "diffhpe/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace diffhpe {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "quadratic") return ScheduleKind::Quadratic;
    throw std::invalid_argument("unknown schedule kind '" + s + "' (expected linear|quadratic)");
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::Linear ? "linear" : "quadratic";
}

ReverseVariance reverse_variance_from_string(const std::string& s) {
    if (s == "posterior") return ReverseVariance::Posterior;
    if (s == "beta") return ReverseVariance::Beta;
    throw std::invalid_argument("unknown reverse variance mode '" + s + "' (expected posterior|beta)");
}

std::string to_string(ReverseVariance v) {
    return v == ReverseVariance::Posterior ? "posterior" : "beta";
}

void VarianceSchedule::check_step(int t, const char* where) const {
    if (t < 1 || t > T)
        throw std::out_of_range(std::string(where) + ": step " + std::to_string(t) +
                                " outside [1, " + std::to_string(T) + "]");
}

VarianceSchedule make_schedule(ScheduleKind kind, double beta_min, double beta_max, int T,
                               ReverseVariance variance_mode) {
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
    if (T < 1) throw std::invalid_argument("make_schedule: need T >= 1");

    VarianceSchedule s;
    s.kind = kind;
    s.variance_mode = variance_mode;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.T = T;
    s.betas.resize(T);
    for (int i = 0; i < T; ++i) {
        double u = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
        if (kind == ScheduleKind::Linear) {
            s.betas[i] = beta_min + (beta_max - beta_min) * u;
        } else {
            double r = std::sqrt(beta_min) + (std::sqrt(beta_max) - std::sqrt(beta_min)) * u;
            s.betas[i] = r * r;
        }
    }

    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        prod *= 1.0 - s.betas[i];
        s.alpha_bar[i] = prod;
    }

    s.k1.resize(T);
    s.k2.resize(T);
    s.sigma2.resize(T);
    for (int i = 0; i < T; ++i) {
        double b = s.betas[i];
        s.k1[i] = 1.0 / std::sqrt(1.0 - b);
        s.k2[i] = b / std::sqrt(1.0 - s.alpha_bar[i]);
        if (variance_mode == ReverseVariance::Beta) {
            s.sigma2[i] = b;
        } else {
            double abar_prev = i == 0 ? 1.0 : s.alpha_bar[i - 1];
            s.sigma2[i] = b * (1.0 - abar_prev) / (1.0 - s.alpha_bar[i]);
        }
    }
    return s;
}

}  // namespace diffhpe
