#include "diffhpe/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace diffhpe {

namespace {

Side parse_side(const std::string& s, const std::string& origin) {
    if (s == "left") return Side::Left;
    if (s == "right") return Side::Right;
    if (s == "center") return Side::Center;
    throw std::invalid_argument(origin + ": unknown side label '" + s + "'");
}

void derive_segments(SkeletonGraph& g) {
    const int S = g.segment_count();
    g.left_segments.clear();
    g.right_segments.clear();
    g.central_segments.clear();
    g.segment_mirror.assign(S, -1);

    for (int s = 0; s < S; ++s) {
        switch (g.joint_sides[g.edges[s].second]) {
            case Side::Left: g.left_segments.push_back(s); break;
            case Side::Right: g.right_segments.push_back(s); break;
            case Side::Center: g.central_segments.push_back(s); break;
        }
    }

    auto mirror_joint = [&](int j) {
        return g.joint_mirror[j] >= 0 ? g.joint_mirror[j] : j;
    };
    for (int s = 0; s < S; ++s) {
        if (g.joint_sides[g.edges[s].second] == Side::Center) continue;
        int mp = mirror_joint(g.edges[s].first);
        int md = mirror_joint(g.edges[s].second);
        for (int r = 0; r < S; ++r) {
            if (g.edges[r] == std::make_pair(mp, md)) {
                g.segment_mirror[s] = r;
                break;
            }
        }
    }
}

}  // namespace

const std::vector<int>& SkeletonGraph::group(const std::string& group_name) const {
    auto it = joint_groups.find(group_name);
    if (it == joint_groups.end())
        throw std::invalid_argument("skeleton '" + name + "' has no joint group '" + group_name + "'");
    return it->second;
}

void SkeletonGraph::validate() const {
    const int J = joint_count;
    const int S = segment_count();
    if (J < 2) throw std::invalid_argument("skeleton needs at least 2 joints");
    if (S != J - 1)
        throw std::invalid_argument("edges must form a spanning tree: expected " +
                                    std::to_string(J - 1) + " edges, got " + std::to_string(S));
    if (static_cast<int>(joint_names.size()) != J || static_cast<int>(joint_sides.size()) != J ||
        static_cast<int>(joint_mirror.size()) != J)
        throw std::invalid_argument("joint attribute arrays must have length J");
    if (root < 0 || root >= J) throw std::invalid_argument("root index out of range");

    // Connectivity: S = J-1 plus reachability of every joint makes it a tree.
    std::vector<std::vector<int>> nbr(J);
    for (const auto& [p, d] : edges) {
        if (p < 0 || p >= J || d < 0 || d >= J)
            throw std::invalid_argument("edge endpoint out of range");
        nbr[p].push_back(d);
        nbr[d].push_back(p);
    }
    std::vector<char> seen(J, 0);
    std::vector<int> stack{root};
    seen[root] = 1;
    int reached = 0;
    while (!stack.empty()) {
        int j = stack.back();
        stack.pop_back();
        ++reached;
        for (int k : nbr[j])
            if (!seen[k]) {
                seen[k] = 1;
                stack.push_back(k);
            }
    }
    if (reached != J) throw std::invalid_argument("edges do not connect all joints");

    // Edge orientation: the distal joint must be the one farther from the root.
    std::vector<int> depth(J, -1);
    depth[root] = 0;
    std::vector<int> queue{root};
    for (size_t qi = 0; qi < queue.size(); ++qi)
        for (int k : nbr[queue[qi]])
            if (depth[k] < 0) {
                depth[k] = depth[queue[qi]] + 1;
                queue.push_back(k);
            }
    for (const auto& [p, d] : edges)
        if (depth[d] != depth[p] + 1)
            throw std::invalid_argument("edge (" + std::to_string(p) + ", " + std::to_string(d) +
                                        ") is not oriented proximal -> distal");

    if (left_segments.size() != right_segments.size())
        throw std::invalid_argument("left and right segment lists differ in length");
    std::set<int> all;
    for (int s : left_segments) all.insert(s);
    for (int s : right_segments) all.insert(s);
    for (int s : central_segments) all.insert(s);
    if (static_cast<int>(all.size()) != S ||
        static_cast<int>(left_segments.size() + right_segments.size() + central_segments.size()) != S)
        throw std::invalid_argument("left/right/central lists must partition the edges");

    std::set<int> image;
    for (int s : left_segments) {
        int m = segment_mirror[s];
        if (m < 0 || std::find(right_segments.begin(), right_segments.end(), m) == right_segments.end())
            throw std::invalid_argument("segment " + std::to_string(s) + " has no right-side mirror");
        if (segment_mirror[m] != s)
            throw std::invalid_argument("segment mirror map is not an involution");
        image.insert(m);
    }
    if (image.size() != left_segments.size())
        throw std::invalid_argument("tau is not a bijection onto the right segments");

    for (const auto& [gname, idx] : joint_groups)
        for (int j : idx)
            if (j < 0 || j >= J)
                throw std::invalid_argument("joint group '" + gname + "' index out of range");
}

SkeletonGraph standard_h36m_skeleton() {
    SkeletonGraph g;
    g.name = "h36m17";
    g.joint_count = 17;
    g.root = 0;

    struct JointDef {
        const char* name;
        Side side;
        int mirror;
    };
    const JointDef defs[17] = {
        {"pelvis", Side::Center, -1},      {"right_hip", Side::Right, 4},
        {"right_knee", Side::Right, 5},    {"right_ankle", Side::Right, 6},
        {"left_hip", Side::Left, 1},       {"left_knee", Side::Left, 2},
        {"left_ankle", Side::Left, 3},     {"spine", Side::Center, -1},
        {"thorax", Side::Center, -1},      {"neck", Side::Center, -1},
        {"head", Side::Center, -1},        {"left_shoulder", Side::Left, 14},
        {"left_elbow", Side::Left, 15},    {"left_wrist", Side::Left, 16},
        {"right_shoulder", Side::Right, 11}, {"right_elbow", Side::Right, 12},
        {"right_wrist", Side::Right, 13},
    };
    for (const auto& d : defs) {
        g.joint_names.emplace_back(d.name);
        g.joint_sides.push_back(d.side);
        g.joint_mirror.push_back(d.mirror);
    }
    g.edges = {{0, 1}, {1, 2}, {2, 3}, {0, 4}, {4, 5},   {5, 6},   {0, 7},   {7, 8},
               {8, 9}, {9, 10}, {8, 11}, {11, 12}, {12, 13}, {8, 14}, {14, 15}, {15, 16}};
    g.joint_groups = {
        {"root", {0}},
        {"torso", {0, 7, 8, 9, 10}},
        {"right_leg", {1, 2, 3}},
        {"left_leg", {4, 5, 6}},
        {"left_arm", {11, 12, 13}},
        {"right_arm", {14, 15, 16}},
    };
    derive_segments(g);
    g.validate();
    return g;
}

SkeletonGraph SkeletonGraph::from_json_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(origin + ": not valid JSON: " + e.what());
    }

    SkeletonGraph g;
    g.name = j.value("name", "unnamed");
    g.root = j.value("root", 0);
    const auto& joints = j.at("joints");
    g.joint_count = static_cast<int>(joints.size());
    for (const auto& joint : joints) {
        g.joint_names.push_back(joint.at("name").get<std::string>());
        g.joint_sides.push_back(parse_side(joint.at("side").get<std::string>(), origin));
        g.joint_mirror.push_back(joint.value("mirror", -1));
    }
    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2)
            throw std::invalid_argument(origin + ": each edge must be a [proximal, distal] pair");
        g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    if (j.contains("groups"))
        for (const auto& [gname, idx] : j.at("groups").items())
            g.joint_groups[gname] = idx.get<std::vector<int>>();
    derive_segments(g);
    g.validate();
    return g;
}

SkeletonGraph SkeletonGraph::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open skeleton file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str(), path);
}

Matrix adjacency(const SkeletonGraph& graph, bool self_loops) {
    const int J = graph.joint_count;
    Matrix a(J, J);
    for (const auto& [p, d] : graph.edges) {
        a.at(p, d) = 1.0;
        a.at(d, p) = 1.0;
    }
    if (self_loops)
        for (int i = 0; i < J; ++i) a.at(i, i) = 1.0;
    return a;
}

Matrix segment_lengths(const Pose3D& pose, const SkeletonGraph& graph) {
    if (pose.d1 != graph.joint_count)
        throw std::invalid_argument("segment_lengths: pose has " + std::to_string(pose.d1) +
                                    " joints, skeleton has " + std::to_string(graph.joint_count));
    const int L = pose.d0;
    const int S = graph.segment_count();
    Matrix y(L, S);
    for (int l = 0; l < L; ++l) {
        for (int s = 0; s < S; ++s) {
            const auto& [p, d] = graph.edges[s];
            const double* a = pose.row(l, p);
            const double* b = pose.row(l, d);
            double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            y.at(l, s) = 1000.0 * std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return y;
}

}  // namespace diffhpe
