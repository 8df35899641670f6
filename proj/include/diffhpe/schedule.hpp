#pragma once

#include <string>
#include <vector>

namespace diffhpe {

enum class ScheduleKind { Linear, Quadratic };
enum class ReverseVariance { Posterior, Beta };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);
ReverseVariance reverse_variance_from_string(const std::string& s);
std::string to_string(ReverseVariance v);

// Forward-diffusion variance schedule and the constants of the reverse step.
// Accessors take the 1-based step index t in [1, T].
struct VarianceSchedule {
    ScheduleKind kind = ScheduleKind::Quadratic;
    ReverseVariance variance_mode = ReverseVariance::Posterior;
    double beta_min = 1e-4;
    double beta_max = 0.5;
    int T = 50;

    std::vector<double> betas;      // beta_t
    std::vector<double> alpha_bar;  // prod_{u<=t} (1 - beta_u)
    std::vector<double> k1;         // 1 / sqrt(1 - beta_t)
    std::vector<double> k2;         // beta_t / sqrt(1 - alpha_bar_t)
    std::vector<double> sigma2;     // reverse-step variance

    double beta(int t) const { return betas[t - 1]; }
    double abar(int t) const { return alpha_bar[t - 1]; }
    double k1_at(int t) const { return k1[t - 1]; }
    double k2_at(int t) const { return k2[t - 1]; }
    double sigma2_at(int t) const { return sigma2[t - 1]; }

    void check_step(int t, const char* where) const;
};

// betas interpolated from beta_min to beta_max over T steps; Quadratic
// interpolates sqrt(beta) linearly and squares. Posterior variance is
// beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t), zero at t = 1;
// the Beta mode uses sigma2_t = beta_t instead.
VarianceSchedule make_schedule(ScheduleKind kind, double beta_min, double beta_max, int T,
                               ReverseVariance variance_mode = ReverseVariance::Posterior);

}  // namespace diffhpe
