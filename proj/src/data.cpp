#include "diffhpe/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "diffhpe/rng.hpp"

namespace fs = std::filesystem;

namespace diffhpe {

const Track& Dataset::track_by_id(int id) const {
    for (const auto& t : tracks)
        if (t.id == id) return t;
    throw std::out_of_range("dataset has no track with id " + std::to_string(id));
}

const std::vector<int>& Dataset::split(const std::string& name) const {
    if (name == "train") return train_ids;
    if (name == "val") return val_ids;
    if (name == "test") return test_ids;
    throw std::invalid_argument("unknown split '" + name + "' (expected train|val|test)");
}

std::vector<PoseClip> Dataset::clips(const std::string& split_name, int L, int stride) const {
    std::vector<PoseClip> out;
    for (int id : split(split_name)) {
        auto w = window(track_by_id(id), camera.image, L, stride);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

std::vector<PoseClip> window(const Track& track, ImageSize image_size, int L, int stride) {
    if (L < 1 || stride < 1) throw std::invalid_argument("window: L and stride must be >= 1");
    const int len = track.length();
    if (len < L)
        throw std::invalid_argument("window: track " + std::to_string(track.id) + " has " +
                                    std::to_string(len) + " frames, need at least " +
                                    std::to_string(L));
    const int count = (len - L) / stride + 1;
    std::vector<PoseClip> clips(count);
    const int J = track.x2d.d1;
    for (int c = 0; c < count; ++c) {
        const int start = c * stride;
        PoseClip& clip = clips[c];
        clip.x2d = Pose2D(L, J, 2);
        clip.x3d = Pose3D(L, J, 3);
        for (int l = 0; l < L; ++l)
            for (int j = 0; j < J; ++j) {
                const double* s2 = track.x2d.row(start + l, j);
                const double* s3 = track.x3d.row(start + l, j);
                double* d2 = clip.x2d.row(l, j);
                double* d3 = clip.x3d.row(l, j);
                d2[0] = s2[0];
                d2[1] = s2[1];
                d3[0] = s3[0];
                d3[1] = s3[1];
                d3[2] = s3[2];
            }
        clip.meta = {track.id, track.subject, track.action, track.camera, image_size};
    }
    return clips;
}

void NormalizationStats::validate() const {
    for (double s : std)
        if (!(s > 0.0)) throw std::invalid_argument("normalization stats: std must be positive");
}

NormalizationStats fit_stats(const Dataset& ds, const std::string& split_name, int L, int stride) {
    NormalizationStats st;
    st.fitted_on = split_name;
    const int root = ds.skeleton.root;
    double count = 0.0;
    std::array<double, 3> sum{0, 0, 0}, sum2{0, 0, 0};
    for (int id : ds.split(split_name)) {
        for (const auto& clip : window(ds.track_by_id(id), ds.camera.image, L, stride)) {
            for (int l = 0; l < clip.x3d.d0; ++l) {
                const double* r = clip.x3d.row(l, root);
                for (int j = 0; j < clip.x3d.d1; ++j) {
                    if (j == root) continue;
                    const double* p = clip.x3d.row(l, j);
                    for (int c = 0; c < 3; ++c) {
                        const double v = p[c] - r[c];
                        sum[c] += v;
                        sum2[c] += v * v;
                    }
                    count += 1.0;
                }
            }
        }
    }
    if (count < 2) throw std::runtime_error("fit_stats: split '" + split_name + "' is empty");
    for (int c = 0; c < 3; ++c) {
        st.mean[c] = sum[c] / count;
        const double var = sum2[c] / count - st.mean[c] * st.mean[c];
        st.std[c] = std::sqrt(var > 1e-18 ? var : 1e-18);
    }
    st.validate();
    return st;
}

ModelSpaceClip to_model_space(const PoseClip& clip, const NormalizationStats& stats, int root_index) {
    stats.validate();
    ModelSpaceClip out;
    out.x2d_norm = condition_raw2d(clip.x2d, clip.meta.image_size).tensor;
    const int L = clip.x3d.d0, J = clip.x3d.d1;
    out.x3d_model = Pose3D(L, J, 3);
    out.root_trajectory.resize(L);
    for (int l = 0; l < L; ++l) {
        const double* r = clip.x3d.row(l, root_index);
        out.root_trajectory[l] = {r[0], r[1], r[2]};
        for (int j = 0; j < J; ++j) {
            double* d = out.x3d_model.row(l, j);
            if (j == root_index) {
                d[0] = d[1] = d[2] = 0.0;
                continue;
            }
            const double* p = clip.x3d.row(l, j);
            for (int c = 0; c < 3; ++c) d[c] = (p[c] - r[c] - stats.mean[c]) / stats.std[c];
        }
    }
    return out;
}

Pose3D from_model_space(const Pose3D& x3d_model,
                        const std::vector<std::array<double, 3>>& root_trajectory,
                        const NormalizationStats& stats, int root_index) {
    const int L = x3d_model.d0, J = x3d_model.d1;
    if (static_cast<int>(root_trajectory.size()) != L)
        throw std::invalid_argument("from_model_space: root trajectory length mismatch");
    Pose3D out(L, J, 3);
    for (int l = 0; l < L; ++l) {
        const auto& r = root_trajectory[l];
        for (int j = 0; j < J; ++j) {
            const double* m = x3d_model.row(l, j);
            double* d = out.row(l, j);
            if (j == root_index) {
                d[0] = r[0];
                d[1] = r[1];
                d[2] = r[2];
                continue;
            }
            for (int c = 0; c < 3; ++c) d[c] = m[c] * stats.std[c] + stats.mean[c] + r[c];
        }
    }
    return out;
}

// ------------------------------------------------------------------ synthetic

namespace {

// Sum of a few random low-frequency sinusoids in [0, 1) track time.
struct SmoothSignal {
    double base = 0.0;
    std::array<double, 3> amp{}, freq{}, phase{};

    static SmoothSignal draw(Rng& rng, double base_lo, double base_hi, double amp_scale) {
        SmoothSignal s;
        s.base = rng.uniform(base_lo, base_hi);
        for (int k = 0; k < 3; ++k) {
            s.amp[k] = amp_scale * rng.uniform(0.3, 1.0) / (k + 1);
            s.freq[k] = rng.uniform(0.5, 2.5);
            s.phase[k] = rng.uniform(0.0, 6.283185307179586);
        }
        return s;
    }

    double at(double tau) const {
        double v = base;
        for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(6.283185307179586 * freq[k] * tau + phase[k]);
        return v;
    }
};

struct TrackResult {
    bool in_bounds = false;
    Pose2D x2d;
    Pose3D x3d;
};

TrackResult generate_track(const SkeletonGraph& skel, const CameraModel& cam, int length,
                           uint64_t seed) {
    Rng rng(seed);
    const int J = skel.joint_count;

    // Fixed bone lengths, mirrored exactly across the sagittal plane.
    std::vector<double> seg_len(skel.segment_count(), 0.0);
    for (int s = 0; s < skel.segment_count(); ++s) {
        const int m = skel.segment_mirror[s];
        if (m >= 0 && m < s && seg_len[m] > 0.0) {
            seg_len[s] = seg_len[m];
            continue;
        }
        seg_len[s] = rng.uniform(0.08, 0.20);
    }

    // Smooth root wander plus smooth per-joint direction fields.
    SmoothSignal root_x = SmoothSignal::draw(rng, -0.10, 0.10, 0.05);
    SmoothSignal root_y = SmoothSignal::draw(rng, -0.10, 0.10, 0.05);
    SmoothSignal root_z = SmoothSignal::draw(rng, 3.8, 4.2, 0.08);

    const int S = skel.segment_count();
    std::vector<std::array<SmoothSignal, 3>> dir_sig(S);
    std::vector<std::array<double, 3>> dir_base(S);
    for (int s = 0; s < S; ++s) {
        double n = 0.0;
        for (int c = 0; c < 3; ++c) {
            dir_base[s][c] = rng.normal();
            n += dir_base[s][c] * dir_base[s][c];
        }
        n = std::sqrt(n);
        if (n < 1e-6) {
            dir_base[s] = {0.0, 0.0, 1.0};
            n = 1.0;
        }
        for (int c = 0; c < 3; ++c) {
            dir_base[s][c] /= n;
            dir_sig[s][c] = SmoothSignal::draw(rng, 0.0, 0.0, 0.18);
        }
    }

    // Place joints outward from the root: order segments by the depth of
    // their distal joint so the proximal end is always already positioned.
    std::vector<int> depth(J, 0);
    {
        std::vector<std::vector<int>> children(J);
        for (const auto& [p, d] : skel.edges) children[p].push_back(d);
        std::vector<int> queue{skel.root};
        for (size_t qi = 0; qi < queue.size(); ++qi)
            for (int c : children[queue[qi]]) {
                depth[c] = depth[queue[qi]] + 1;
                queue.push_back(c);
            }
    }
    std::vector<int> seg_order(S);
    for (int s = 0; s < S; ++s) seg_order[s] = s;
    std::stable_sort(seg_order.begin(), seg_order.end(),
                     [&](int a, int b) { return depth[skel.edges[a].second] < depth[skel.edges[b].second]; });

    TrackResult out;
    out.x2d = Pose2D(length, J, 2);
    out.x3d = Pose3D(length, J, 3);
    out.in_bounds = true;
    for (int l = 0; l < length; ++l) {
        const double tau = static_cast<double>(l) / length;
        double* rootp = out.x3d.row(l, skel.root);
        rootp[0] = root_x.at(tau);
        rootp[1] = root_y.at(tau);
        rootp[2] = root_z.at(tau);
        for (int si = 0; si < S; ++si) {
            const int s = seg_order[si];
            const auto& [p, d] = skel.edges[s];
            double dir[3];
            double n = 0.0;
            for (int c = 0; c < 3; ++c) {
                dir[c] = dir_base[s][c] + dir_sig[s][c].at(tau);
                n += dir[c] * dir[c];
            }
            n = std::sqrt(n);
            const double* pp = out.x3d.row(l, p);
            double* pd = out.x3d.row(l, d);
            for (int c = 0; c < 3; ++c) pd[c] = pp[c] + seg_len[s] * dir[c] / n;
        }
        for (int j = 0; j < J; ++j) {
            double* uv = out.x2d.row(l, j);
            cam.project(out.x3d.row(l, j), uv);
            if (!(uv[0] >= 0.0 && uv[0] <= cam.image.w && uv[1] >= 0.0 && uv[1] <= cam.image.h))
                out.in_bounds = false;
        }
    }
    return out;
}

}  // namespace

Dataset synthetic_dataset(uint64_t seed, int num_tracks, int track_length,
                          const SkeletonGraph& skeleton, const CameraModel& camera) {
    if (num_tracks < 1) throw std::invalid_argument("synthetic_dataset: need num_tracks >= 1");
    if (track_length < 1) throw std::invalid_argument("synthetic_dataset: need track_length >= 1");
    skeleton.validate();

    Dataset ds;
    ds.skeleton = skeleton;
    ds.camera = camera;
    SeedSequence seeds(seed);
    for (int i = 0; i < num_tracks; ++i) {
        TrackResult tr;
        int attempt = 0;
        for (; attempt < 100; ++attempt) {
            tr = generate_track(skeleton, camera, track_length,
                                seeds.derive(static_cast<uint64_t>(i), static_cast<uint64_t>(attempt)));
            if (tr.in_bounds) break;
        }
        if (!tr.in_bounds)
            throw std::runtime_error("synthetic_dataset: could not keep track " + std::to_string(i) +
                                     " inside the image bounds");
        Track t;
        t.id = i;
        t.subject = i % 7;
        t.action = i % 15;
        t.camera = 0;
        t.x2d = std::move(tr.x2d);
        t.x3d = std::move(tr.x3d);
        ds.tracks.push_back(std::move(t));
    }

    // Deterministic split by track id: ~70% train, ~15% val, ~15% test.
    for (int i = 0; i < num_tracks; ++i) {
        const int bucket = i % 20;
        if (bucket < 14)
            ds.train_ids.push_back(i);
        else if (bucket < 17)
            ds.val_ids.push_back(i);
        else
            ds.test_ids.push_back(i);
    }
    return ds;
}

// ------------------------------------------------------------------ container

namespace {

std::string track_file(int id, const char* field) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "track_%05d.%s.f32", id, field);
    return buf;
}

void write_f32(const fs::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<float> buf(t.size());
    for (size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_f32(const fs::path& path, int d0, int d1, int d2) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto actual = static_cast<size_t>(in.tellg());
    const size_t expected = static_cast<size_t>(d0) * d1 * d2 * sizeof(float);
    if (actual != expected)
        throw std::runtime_error("truncated or oversized array file " + path.string() + ": have " +
                                 std::to_string(actual) + " bytes, manifest declares " +
                                 std::to_string(expected) + " (mismatch at byte offset " +
                                 std::to_string(std::min(actual, expected)) + ")");
    in.seekg(0);
    std::vector<float> buf(expected / sizeof(float));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
    if (!in) throw std::runtime_error("short read on " + path.string());
    Tensor t(d0, d1, d2);
    for (size_t i = 0; i < buf.size(); ++i) t.v[i] = static_cast<double>(buf[i]);
    return t;
}

nlohmann::json skeleton_to_json(const SkeletonGraph& g) {
    nlohmann::json j;
    j["name"] = g.name;
    j["root"] = g.root;
    nlohmann::json joints = nlohmann::json::array();
    for (int i = 0; i < g.joint_count; ++i) {
        nlohmann::json joint;
        joint["name"] = g.joint_names[i];
        joint["side"] = g.joint_sides[i] == Side::Left    ? "left"
                        : g.joint_sides[i] == Side::Right ? "right"
                                                          : "center";
        if (g.joint_mirror[i] >= 0) joint["mirror"] = g.joint_mirror[i];
        joints.push_back(joint);
    }
    j["joints"] = joints;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, d] : g.edges) edges.push_back({p, d});
    j["edges"] = edges;
    nlohmann::json groups;
    for (const auto& [name, idx] : g.joint_groups) groups[name] = idx;
    j["groups"] = groups;
    return j;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json m;
    m["format"] = "dhpe-dataset";
    m["version"] = 1;
    m["units"] = "meters";
    m["skeleton"] = skeleton_to_json(ds.skeleton);
    m["camera"] = {{"fx", ds.camera.fx},      {"fy", ds.camera.fy},
                   {"cx", ds.camera.cx},      {"cy", ds.camera.cy},
                   {"image_w", ds.camera.image.w}, {"image_h", ds.camera.image.h}};
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& t : ds.tracks) {
        nlohmann::json tj;
        tj["id"] = t.id;
        tj["length"] = t.length();
        tj["subject"] = t.subject;
        tj["action"] = t.action;
        tj["camera"] = t.camera;
        tj["x2d_file"] = track_file(t.id, "x2d");
        tj["x2d_shape"] = {t.x2d.d0, t.x2d.d1, t.x2d.d2};
        tj["x3d_file"] = track_file(t.id, "x3d");
        tj["x3d_shape"] = {t.x3d.d0, t.x3d.d1, t.x3d.d2};
        tracks.push_back(tj);
        write_f32(fs::path(dir) / track_file(t.id, "x2d"), t.x2d);
        write_f32(fs::path(dir) / track_file(t.id, "x3d"), t.x3d);
    }
    m["tracks"] = tracks;
    m["splits"] = {{"train", ds.train_ids}, {"val", ds.val_ids}, {"test", ds.test_ids}};
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << m.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw std::runtime_error("cannot open " + mpath.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed manifest " + mpath.string() + ": " + e.what());
    }
    if (m.value("format", "") != "dhpe-dataset")
        throw std::runtime_error(mpath.string() + ": not a dhpe-dataset manifest");

    Dataset ds;
    ds.skeleton = SkeletonGraph::from_json_text(m.at("skeleton").dump(), mpath.string());
    const auto& cj = m.at("camera");
    ds.camera.fx = cj.at("fx");
    ds.camera.fy = cj.at("fy");
    ds.camera.cx = cj.at("cx");
    ds.camera.cy = cj.at("cy");
    ds.camera.image.w = cj.at("image_w");
    ds.camera.image.h = cj.at("image_h");

    const int J = ds.skeleton.joint_count;
    for (const auto& tj : m.at("tracks")) {
        Track t;
        t.id = tj.at("id");
        t.subject = tj.value("subject", 0);
        t.action = tj.value("action", 0);
        t.camera = tj.value("camera", 0);
        const auto s2 = tj.at("x2d_shape").get<std::vector<int>>();
        const auto s3 = tj.at("x3d_shape").get<std::vector<int>>();
        if (s2.size() != 3 || s3.size() != 3 || s2[2] != 2 || s3[2] != 3)
            throw std::runtime_error("manifest schema error: track " + std::to_string(t.id) +
                                     " has malformed shapes");
        if (s2[1] != J || s3[1] != J)
            throw std::runtime_error("manifest schema error: track " + std::to_string(t.id) +
                                     " declares " + std::to_string(s2[1]) + " joints, skeleton '" +
                                     ds.skeleton.name + "' has " + std::to_string(J));
        t.x2d = read_f32(fs::path(dir) / tj.at("x2d_file").get<std::string>(), s2[0], s2[1], s2[2]);
        t.x3d = read_f32(fs::path(dir) / tj.at("x3d_file").get<std::string>(), s3[0], s3[1], s3[2]);
        ds.tracks.push_back(std::move(t));
    }
    const auto& splits = m.at("splits");
    ds.train_ids = splits.at("train").get<std::vector<int>>();
    ds.val_ids = splits.value("val", std::vector<int>{});
    ds.test_ids = splits.at("test").get<std::vector<int>>();

    // Inputs must be inside the declared image or at the occlusion sentinel.
    for (const auto& t : ds.tracks)
        for (int l = 0; l < t.x2d.d0; ++l)
            for (int j = 0; j < t.x2d.d1; ++j) {
                const double* uv = t.x2d.row(l, j);
                const bool sentinel = uv[0] == 0.0 && uv[1] == 0.0;
                if (!sentinel && !(uv[0] >= 0.0 && uv[0] <= ds.camera.image.w && uv[1] >= 0.0 &&
                                   uv[1] <= ds.camera.image.h))
                    throw std::runtime_error("track " + std::to_string(t.id) + " frame " +
                                             std::to_string(l) + " joint " + std::to_string(j) +
                                             " lies outside the declared image bounds");
            }
    return ds;
}

Dataset load_external(const std::string& path, const std::string& format_tag) {
    if (format_tag == "dhpe" || format_tag.empty()) return load_dataset(path);
    throw std::invalid_argument("unsupported dataset format tag '" + format_tag +
                                "' (supported: dhpe)");
}

}  // namespace diffhpe
