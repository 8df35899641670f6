#include "diffhpe/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace diffhpe {

namespace {

struct NamedVec {
    std::string name;
    const std::vector<double>* data;
};

void write_container(const std::string& path, nlohmann::json header,
                     const std::vector<NamedVec>& arrays) {
    nlohmann::json manifest = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& a : arrays) {
        nlohmann::json e;
        e["name"] = a.name;
        e["dtype"] = "f8";
        e["shape"] = {a.data->size()};
        e["offset"] = offset;
        e["nbytes"] = a.data->size() * sizeof(double);
        manifest.push_back(e);
        offset += a.data->size() * sizeof(double);
    }
    header["arrays"] = manifest;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, 8);
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& a : arrays)
        out.write(reinterpret_cast<const char*>(a.data->data()),
                  static_cast<std::streamsize>(a.data->size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

struct Container {
    nlohmann::json header;
    std::vector<char> payload;

    std::vector<double> array(const std::string& name) const {
        for (const auto& e : header.at("arrays")) {
            if (e.at("name") != name) continue;
            const uint64_t off = e.at("offset");
            const uint64_t nbytes = e.at("nbytes");
            if (off + nbytes > payload.size())
                throw std::runtime_error("checkpoint array '" + name + "' exceeds payload");
            std::vector<double> v(nbytes / sizeof(double));
            std::memcpy(v.data(), payload.data() + off, nbytes);
            return v;
        }
        throw std::runtime_error("checkpoint has no array named '" + name + "'");
    }

    bool has_array(const std::string& name) const {
        for (const auto& e : header.at("arrays"))
            if (e.at("name") == name) return true;
        return false;
    }
};

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error(path + ": not a dhpe checkpoint (bad magic)");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error(path + ": truncated checkpoint header");
    Container c;
    try {
        c.header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": malformed checkpoint header: " + e.what());
    }
    c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return c;
}

nlohmann::json stats_to_json(const NormalizationStats& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"fitted_on", s.fitted_on}};
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
    NormalizationStats s;
    auto m = j.at("mean").get<std::vector<double>>();
    auto d = j.at("std").get<std::vector<double>>();
    for (int c = 0; c < 3; ++c) {
        s.mean[c] = m.at(c);
        s.std[c] = d.at(c);
    }
    s.fitted_on = j.value("fitted_on", "");
    return s;
}

nlohmann::json skeleton_json_of(const SkeletonGraph& g) {
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
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, d] : g.edges) edges.push_back({p, d});
    nlohmann::json groups;
    for (const auto& [name, idx] : g.joint_groups) groups[name] = idx;
    return {{"name", g.name}, {"root", g.root}, {"joints", joints}, {"edges", edges}, {"groups", groups}};
}

}  // namespace

std::string checkpoint_kind(const std::string& path) {
    return read_container(path).header.value("kind", "");
}

void save_diffusion_checkpoint(const std::string& path, Denoiser& model,
                               const VarianceSchedule& schedule, const NormalizationStats& stats,
                               ConditionMode mode, const TrainerState* trainer_state) {
    nlohmann::json h;
    h["format"] = "dhpe-checkpoint";
    h["version"] = 1;
    h["kind"] = "diffusion";
    h["byte_order"] = "little";
    h["condition_mode"] = to_string(mode);
    h["denoiser"] = {{"num_blocks", model.config.num_blocks},
                     {"channels", model.config.channels},
                     {"dropout", model.config.dropout},
                     {"time_embedding_dim", model.config.time_embedding_dim},
                     {"condition_channels", model.config.condition_channels},
                     {"time_kernel", model.config.time_kernel},
                     {"scale_skips", model.config.scale_skips}};
    h["schedule"] = {{"kind", to_string(schedule.kind)},
                     {"beta_min", schedule.beta_min},
                     {"beta_max", schedule.beta_max},
                     {"T", schedule.T},
                     {"variance", to_string(schedule.variance_mode)}};
    h["normalization"] = stats_to_json(stats);
    h["skeleton"] = skeleton_json_of(model.skeleton);

    std::vector<ArrayRef> refs;
    model.collect(refs);
    std::vector<NamedVec> arrays;
    for (const auto& r : refs) arrays.push_back({r.name, r.data});

    if (trainer_state) {
        h["trainer_state"] = {{"epoch", trainer_state->epoch},
                              {"learning_rate", trainer_state->learning_rate},
                              {"best_metric", trainer_state->best_metric},
                              {"best_epoch", trainer_state->best_epoch},
                              {"plateau_best", trainer_state->plateau_best},
                              {"plateau_bad_count", trainer_state->plateau_bad_count},
                              {"adam_step", trainer_state->adam_step}};
        arrays.push_back({"adam.m", &trainer_state->adam_m});
        arrays.push_back({"adam.v", &trainer_state->adam_v});
    }
    write_container(path, h, arrays);
}

DiffusionCheckpoint load_diffusion_checkpoint(const std::string& path) {
    Container c = read_container(path);
    if (c.header.value("kind", "") != "diffusion")
        throw std::runtime_error(path + ": expected a diffusion checkpoint, found kind '" +
                                 c.header.value("kind", "?") + "'");

    const auto& dj = c.header.at("denoiser");
    DenoiserConfig cfg;
    cfg.num_blocks = dj.at("num_blocks");
    cfg.channels = dj.at("channels");
    cfg.dropout = dj.at("dropout");
    cfg.time_embedding_dim = dj.at("time_embedding_dim");
    cfg.condition_channels = dj.at("condition_channels");
    cfg.time_kernel = dj.at("time_kernel");
    cfg.scale_skips = dj.at("scale_skips");

    SkeletonGraph skel = SkeletonGraph::from_json_text(c.header.at("skeleton").dump(), path);

    DiffusionCheckpoint out{Denoiser::create(cfg, skel, 0), VarianceSchedule{}, NormalizationStats{},
                            ConditionMode::Raw2D, std::nullopt};
    std::vector<ArrayRef> refs;
    out.denoiser.collect(refs);
    for (auto& r : refs) {
        auto v = c.array(r.name);
        if (v.size() != r.data->size())
            throw std::runtime_error(path + ": array '" + r.name + "' has " +
                                     std::to_string(v.size()) + " elements, model expects " +
                                     std::to_string(r.data->size()));
        *r.data = std::move(v);
    }

    const auto& sj = c.header.at("schedule");
    out.schedule = make_schedule(schedule_kind_from_string(sj.at("kind")), sj.at("beta_min"),
                                 sj.at("beta_max"), sj.at("T"),
                                 reverse_variance_from_string(sj.value("variance", "posterior")));
    out.stats = stats_from_json(c.header.at("normalization"));
    const std::string mode = c.header.value("condition_mode", "raw2d");
    out.mode = mode == "wrapper" ? ConditionMode::Wrapper : ConditionMode::Raw2D;

    if (c.header.contains("trainer_state")) {
        TrainerState ts;
        const auto& tj = c.header.at("trainer_state");
        ts.epoch = tj.at("epoch");
        ts.learning_rate = tj.at("learning_rate");
        ts.best_metric = tj.at("best_metric");
        ts.best_epoch = tj.at("best_epoch");
        ts.plateau_best = tj.at("plateau_best");
        ts.plateau_bad_count = tj.at("plateau_bad_count");
        ts.adam_step = tj.at("adam_step");
        ts.adam_m = c.array("adam.m");
        ts.adam_v = c.array("adam.v");
        out.trainer_state = std::move(ts);
    }
    return out;
}

void save_backbone_checkpoint(const std::string& path, ToyBackbone& backbone,
                              const NormalizationStats& stats) {
    nlohmann::json h;
    h["format"] = "dhpe-checkpoint";
    h["version"] = 1;
    h["kind"] = "backbone";
    h["byte_order"] = "little";
    h["backbone"] = {{"type", "toy"}, {"feature_channels", backbone.feature_channels()}};
    h["normalization"] = stats_to_json(stats);
    h["skeleton"] = skeleton_json_of(backbone.skeleton());

    std::vector<ArrayRef> refs;
    backbone.collect(refs);
    std::vector<NamedVec> arrays;
    for (const auto& r : refs) arrays.push_back({r.name, r.data});
    write_container(path, h, arrays);
}

BackboneCheckpoint load_backbone_checkpoint(const std::string& path) {
    Container c = read_container(path);
    if (c.header.value("kind", "") != "backbone")
        throw std::runtime_error(path + ": expected a backbone checkpoint, found kind '" +
                                 c.header.value("kind", "?") + "'");
    SkeletonGraph skel = SkeletonGraph::from_json_text(c.header.at("skeleton").dump(), path);
    BackboneCheckpoint out{ToyBackbone(skel, 0), stats_from_json(c.header.at("normalization"))};
    std::vector<ArrayRef> refs;
    out.backbone.collect(refs);
    for (auto& r : refs) {
        auto v = c.array(r.name);
        if (v.size() != r.data->size())
            throw std::runtime_error(path + ": array '" + r.name + "' size mismatch");
        *r.data = std::move(v);
    }
    out.backbone.freeze();
    return out;
}

void save_gt_stub_checkpoint(const std::string& path) {
    nlohmann::json h;
    h["format"] = "dhpe-checkpoint";
    h["version"] = 1;
    h["kind"] = "gt_stub";
    h["byte_order"] = "little";
    write_container(path, h, {});
}

}  // namespace diffhpe
