#pragma once

#include <string>
#include <vector>

#include "diffhpe/rng.hpp"
#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

enum class OcclusionPattern { None, Random, RandomLegArm, ConsecutiveLeg, ConsecutiveFrames };

OcclusionPattern occlusion_pattern_from_string(const std::string& s);
std::string to_string(OcclusionPattern p);

// Simulated keypoint dropout applied to 2D inputs only. `p` drives the random
// patterns, `n` the consecutive ones (absolute frame count, or a fraction of
// the clip length when fractional is set).
struct OcclusionSpec {
    OcclusionPattern pattern = OcclusionPattern::None;
    double p = 0.2;
    double n = 10;
    bool fractional = false;

    static OcclusionSpec none() { return {}; }
    static OcclusionSpec make(OcclusionPattern pattern);  // pattern defaults: p=0.2/0.4, n=10/5

    int frames_for(int L) const;
    void validate(int L) const;
};

// L x J visibility mask, true = visible.
struct OcclusionMask {
    int L = 0, J = 0;
    std::vector<uint8_t> visible;

    bool at(int l, int j) const { return visible[static_cast<size_t>(l) * J + j] != 0; }
    void set(int l, int j, bool v) { visible[static_cast<size_t>(l) * J + j] = v ? 1 : 0; }
    static OcclusionMask all_visible(int L, int J);
};

// random: every cell hidden independently with probability p.
// random_leg_arm: each frame, with probability p, hides left arm + right leg.
// consecutive_leg: n consecutive frames (uniform random start) hide the right leg.
// consecutive_frames: n consecutive frames hide every joint.
OcclusionMask generate_mask(const OcclusionSpec& spec, int L, int J, const SkeletonGraph& graph,
                            Rng& rng);

// Hidden cells are set to raw pixel value 0 on both coordinates, before any
// normalization; visible cells pass through.
Pose2D apply_mask(const Pose2D& x2d, const OcclusionMask& mask);

}  // namespace diffhpe
