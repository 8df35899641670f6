#include "diffhpe/occlusion.hpp"

#include <cmath>
#include <stdexcept>

namespace diffhpe {

OcclusionPattern occlusion_pattern_from_string(const std::string& s) {
    if (s == "none") return OcclusionPattern::None;
    if (s == "random") return OcclusionPattern::Random;
    if (s == "random_leg_arm") return OcclusionPattern::RandomLegArm;
    if (s == "consecutive_leg") return OcclusionPattern::ConsecutiveLeg;
    if (s == "consecutive_frames") return OcclusionPattern::ConsecutiveFrames;
    throw std::invalid_argument("unknown occlusion pattern '" + s + "'");
}

std::string to_string(OcclusionPattern p) {
    switch (p) {
        case OcclusionPattern::None: return "none";
        case OcclusionPattern::Random: return "random";
        case OcclusionPattern::RandomLegArm: return "random_leg_arm";
        case OcclusionPattern::ConsecutiveLeg: return "consecutive_leg";
        case OcclusionPattern::ConsecutiveFrames: return "consecutive_frames";
    }
    return "none";
}

OcclusionSpec OcclusionSpec::make(OcclusionPattern pattern) {
    OcclusionSpec s;
    s.pattern = pattern;
    switch (pattern) {
        case OcclusionPattern::Random: s.p = 0.2; break;
        case OcclusionPattern::RandomLegArm: s.p = 0.4; break;
        case OcclusionPattern::ConsecutiveLeg: s.n = 10; break;
        case OcclusionPattern::ConsecutiveFrames: s.n = 5; break;
        case OcclusionPattern::None: break;
    }
    return s;
}

int OcclusionSpec::frames_for(int L) const {
    if (fractional) return static_cast<int>(std::lround(n * L));
    return static_cast<int>(std::lround(n));
}

void OcclusionSpec::validate(int L) const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("occlusion: p must be in [0, 1]");
    if (pattern == OcclusionPattern::ConsecutiveLeg || pattern == OcclusionPattern::ConsecutiveFrames) {
        const int frames = frames_for(L);
        if (frames < 0 || frames > L)
            throw std::invalid_argument("occlusion: n = " + std::to_string(frames) +
                                        " frames outside [0, " + std::to_string(L) + "]");
    }
}

OcclusionMask OcclusionMask::all_visible(int L, int J) {
    OcclusionMask m;
    m.L = L;
    m.J = J;
    m.visible.assign(static_cast<size_t>(L) * J, 1);
    return m;
}

OcclusionMask generate_mask(const OcclusionSpec& spec, int L, int J, const SkeletonGraph& graph,
                            Rng& rng) {
    spec.validate(L);
    OcclusionMask mask = OcclusionMask::all_visible(L, J);
    switch (spec.pattern) {
        case OcclusionPattern::None: break;
        case OcclusionPattern::Random: {
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < J; ++j)
                    if (rng.bernoulli(spec.p)) mask.set(l, j, false);
            break;
        }
        case OcclusionPattern::RandomLegArm: {
            const auto& arm = graph.group("left_arm");
            const auto& leg = graph.group("right_leg");
            for (int l = 0; l < L; ++l) {
                if (!rng.bernoulli(spec.p)) continue;
                for (int j : arm) mask.set(l, j, false);
                for (int j : leg) mask.set(l, j, false);
            }
            break;
        }
        case OcclusionPattern::ConsecutiveLeg: {
            const int n = spec.frames_for(L);
            const auto& leg = graph.group("right_leg");
            const int start = n >= L ? 0 : rng.uniform_int(0, L - n);
            for (int l = start; l < start + n; ++l)
                for (int j : leg) mask.set(l, j, false);
            break;
        }
        case OcclusionPattern::ConsecutiveFrames: {
            const int n = spec.frames_for(L);
            const int start = n >= L ? 0 : rng.uniform_int(0, L - n);
            for (int l = start; l < start + n; ++l)
                for (int j = 0; j < J; ++j) mask.set(l, j, false);
            break;
        }
    }
    return mask;
}

Pose2D apply_mask(const Pose2D& x2d, const OcclusionMask& mask) {
    if (x2d.d0 != mask.L || x2d.d1 != mask.J)
        throw std::invalid_argument("apply_mask: mask shape does not match the clip");
    Pose2D out = x2d;
    for (int l = 0; l < mask.L; ++l)
        for (int j = 0; j < mask.J; ++j)
            if (!mask.at(l, j)) {
                double* p = out.row(l, j);
                p[0] = 0.0;
                p[1] = 0.0;
            }
    return out;
}

}  // namespace diffhpe
