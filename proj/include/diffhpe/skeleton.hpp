#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diffhpe/tensor.hpp"

namespace diffhpe {

enum class Side { Left, Right, Center };

// Kinematic tree of the human skeleton. Edges are (proximal, distal) joint
// pairs; a segment's side is the side of its distal joint. Immutable after
// construction, safe to share across threads.
struct SkeletonGraph {
    std::string name;
    int joint_count = 0;
    int root = 0;
    std::vector<std::string> joint_names;
    std::vector<Side> joint_sides;
    std::vector<int> joint_mirror;  // left<->right counterpart, -1 for central joints

    std::vector<std::pair<int, int>> edges;
    std::vector<int> left_segments;   // indices into edges
    std::vector<int> right_segments;  // indices into edges
    std::vector<int> central_segments;
    std::vector<int> segment_mirror;  // involution on left/right segments, -1 for central

    std::map<std::string, std::vector<int>> joint_groups;

    int segment_count() const { return static_cast<int>(edges.size()); }

    // tau of the symmetry metric: k-th left segment -> mirrored edge index.
    int tau(int left_ordinal) const { return segment_mirror[left_segments[left_ordinal]]; }

    const std::vector<int>& group(const std::string& group_name) const;

    // Throws std::invalid_argument when the graph is not a spanning tree, the
    // side lists do not partition the edges, or the mirror map is not a
    // left<->right bijection.
    void validate() const;

    // Plain-text definition file (JSON): joint names, sides, mirror pairs,
    // edges, named groups. See assets/skeletons/h36m17.json.
    static SkeletonGraph from_file(const std::string& path);
    static SkeletonGraph from_json_text(const std::string& text, const std::string& origin);
};

// The common 17-joint lifting skeleton: pelvis root, right leg 1-3,
// left leg 4-6, spine/thorax/neck/head 7-10, left arm 11-13, right arm 14-16.
SkeletonGraph standard_h36m_skeleton();

// J x J binary symmetric adjacency; diagonal set when self_loops is true.
Matrix adjacency(const SkeletonGraph& graph, bool self_loops);

// L x S per-frame segment lengths in millimeters; pose coordinates in meters.
Matrix segment_lengths(const Pose3D& pose, const SkeletonGraph& graph);

}  // namespace diffhpe
