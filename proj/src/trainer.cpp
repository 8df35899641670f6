#include "diffhpe/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "diffhpe/diffusion.hpp"
#include "diffhpe/metrics.hpp"
#include "diffhpe/parallel.hpp"

namespace fs = std::filesystem;

namespace diffhpe {

// ----------------------------------------------------------------- TrainConfig

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.dropout = j.value("dropout", c.dropout);
    c.epochs = j.value("epochs", c.epochs);
    c.T = j.value("T", c.T);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("scheduler")) {
        const auto& s = j.at("scheduler");
        c.scheduler.type = s.value("type", c.scheduler.type);
        c.scheduler.factor = s.value("factor", c.scheduler.factor);
        c.scheduler.patience = s.value("patience", c.scheduler.patience);
    }
    c.mode = j.value("mode", c.mode);
    if (j.contains("occlusion")) {
        const auto& o = j.at("occlusion");
        c.occlusion.pattern = occlusion_pattern_from_string(o.value("pattern", "none"));
        OcclusionSpec defaults = OcclusionSpec::make(c.occlusion.pattern);
        c.occlusion.p = o.value("p", defaults.p);
        c.occlusion.n = o.value("n", defaults.n);
        c.occlusion.fractional = o.value("fractional", false);
    }
    c.seed = j.value("seed", c.seed);

    c.sequence_length = j.value("sequence_length", c.sequence_length);
    c.stride = j.value("stride", c.stride);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_hypotheses = j.value("eval_hypotheses", c.eval_hypotheses);
    c.checkpoint_selection = j.value("checkpoint_selection", c.checkpoint_selection);
    c.resample_occlusion = j.value("resample_occlusion", c.resample_occlusion);
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.channels = j.value("channels", c.channels);
    c.time_embedding_dim = j.value("time_embedding_dim", c.time_embedding_dim);
    c.time_kernel = j.value("time_kernel", c.time_kernel);
    c.scale_skips = j.value("scale_skips", c.scale_skips);
    c.schedule_kind = j.value("schedule_kind", c.schedule_kind);
    c.beta_min = j.value("beta_min", c.beta_min);
    c.beta_max = j.value("beta_max", c.beta_max);
    c.reverse_variance = j.value("reverse_variance", c.reverse_variance);
    c.dataset = j.value("dataset", c.dataset);
    c.backbone_checkpoint = j.value("backbone_checkpoint", c.backbone_checkpoint);
    c.out = j.value("out", c.out);
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed config " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["dropout"] = dropout;
    j["epochs"] = epochs;
    j["T"] = T;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["weight_decay"] = weight_decay;
    j["scheduler"] = {{"type", scheduler.type}, {"factor", scheduler.factor},
                      {"patience", scheduler.patience}};
    j["mode"] = mode;
    j["occlusion"] = {{"pattern", to_string(occlusion.pattern)},
                      {"p", occlusion.p},
                      {"n", occlusion.n},
                      {"fractional", occlusion.fractional}};
    j["seed"] = seed;
    j["sequence_length"] = sequence_length;
    j["stride"] = stride;
    j["eval_every"] = eval_every;
    j["eval_hypotheses"] = eval_hypotheses;
    j["checkpoint_selection"] = checkpoint_selection;
    j["resample_occlusion"] = resample_occlusion;
    j["num_blocks"] = num_blocks;
    j["channels"] = channels;
    j["time_embedding_dim"] = time_embedding_dim;
    j["time_kernel"] = time_kernel;
    j["scale_skips"] = scale_skips;
    j["schedule_kind"] = schedule_kind;
    j["beta_min"] = beta_min;
    j["beta_max"] = beta_max;
    j["reverse_variance"] = reverse_variance;
    j["dataset"] = dataset;
    j["backbone_checkpoint"] = backbone_checkpoint;
    j["out"] = out;
    return j;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (T < 1) throw std::invalid_argument("config: T must be >= 1");
    if (mode != "diffhpe_2d" && mode != "diffhpe_wrapper")
        throw std::invalid_argument("config: mode must be diffhpe_2d or diffhpe_wrapper");
    if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
    if (eval_hypotheses < 1) throw std::invalid_argument("config: eval_hypotheses must be >= 1");
    if (checkpoint_selection != "val" && checkpoint_selection != "test")
        throw std::invalid_argument("config: checkpoint_selection must be val or test");
    if (scheduler.type != "plateau")
        throw std::invalid_argument("config: unsupported scheduler type '" + scheduler.type + "'");
    if (!(scheduler.factor > 1.0)) throw std::invalid_argument("config: scheduler factor must be > 1");
}

DenoiserConfig TrainConfig::denoiser_config(int condition_channels) const {
    DenoiserConfig d;
    d.num_blocks = num_blocks;
    d.channels = channels;
    d.dropout = dropout;
    d.time_embedding_dim = time_embedding_dim;
    d.condition_channels = condition_channels;
    d.time_kernel = time_kernel;
    d.scale_skips = scale_skips;
    return d;
}

VarianceSchedule TrainConfig::make_variance_schedule() const {
    return make_schedule(schedule_kind_from_string(schedule_kind), beta_min, beta_max, T,
                         reverse_variance_from_string(reverse_variance));
}

// --------------------------------------------------------------------- Trainer

Trainer::Trainer(const TrainConfig& cfg, const Dataset& dataset, Denoiser& model,
                 const LiftingBackbone* backbone)
    : cfg_(cfg),
      dataset_(dataset),
      model_(model),
      backbone_(backbone),
      sched_(cfg.make_variance_schedule()),
      seeds_(cfg.seed),
      adam_(cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay),
      lr_(cfg.learning_rate) {
    cfg_.validate();
    plateau_.factor = cfg_.scheduler.factor;
    plateau_.patience = cfg_.scheduler.patience;

    const bool wrapper = cfg_.mode == "diffhpe_wrapper";
    if (wrapper) {
        if (!backbone_) throw std::invalid_argument("trainer: wrapper mode needs a backbone");
        if (!backbone_->frozen())
            throw std::logic_error("trainer: the conditioning backbone must be frozen");
        if (model_.config.condition_channels != backbone_->feature_channels())
            throw std::invalid_argument("trainer: denoiser condition_channels do not match backbone");
    } else {
        if (model_.config.condition_channels != 2)
            throw std::invalid_argument("trainer: raw-2D mode needs condition_channels == 2");
    }
    if (dataset_.skeleton.joint_count != model_.skeleton.joint_count)
        throw std::invalid_argument("trainer: dataset and model skeletons disagree");

    stats_ = fit_stats(dataset_, "train", cfg_.sequence_length, cfg_.stride);

    eval_split_ = cfg_.checkpoint_selection == "test" ? "test" : "val";
    auto build = [&](const std::string& split) {
        std::vector<ClipData> out;
        for (auto& clip : dataset_.clips(split, cfg_.sequence_length, cfg_.stride)) {
            ClipData cd;
            ModelSpaceClip ms = to_model_space(clip, stats_, dataset_.skeleton.root);
            cd.x3d_model = std::move(ms.x3d_model);
            cd.root_trajectory = std::move(ms.root_trajectory);
            cd.clip = std::move(clip);
            out.push_back(std::move(cd));
        }
        return out;
    };
    train_clips_ = build("train");
    eval_clips_ = build(eval_split_);
    if (train_clips_.empty()) throw std::runtime_error("trainer: training split is empty");
    if (eval_clips_.empty())
        throw std::runtime_error("trainer: evaluation split '" + eval_split_ + "' is empty");

    if (!cfg_.resample_occlusion) {
        for (size_t i = 0; i < train_clips_.size(); ++i) {
            Rng rng = seeds_.stream(0xF17Ed, i);
            train_clips_[i].fixed_mask =
                generate_mask(cfg_.occlusion, cfg_.sequence_length, dataset_.skeleton.joint_count,
                              dataset_.skeleton, rng);
        }
    }

    std::vector<ArrayRef> refs;
    model_.collect(refs);
    adam_.attach(refs);

    const int workers = par::max_workers();
    grad_buffers_.assign(workers, model_.zeros_like());
    workspaces_.resize(workers);
}

Tensor Trainer::make_conditioner(const Pose2D& x2d_masked, ImageSize size) const {
    if (cfg_.mode == "diffhpe_wrapper")
        return condition_wrapper(x2d_masked, size, *backbone_).tensor;
    return condition_raw2d(x2d_masked, size).tensor;
}

double Trainer::train_step(const std::vector<int>& clip_indices, uint64_t epoch_tag) {
    const int B = static_cast<int>(clip_indices.size());
    if (B == 0) throw std::invalid_argument("train_step: empty batch");
    const int L = cfg_.sequence_length;
    const int J = dataset_.skeleton.joint_count;
    const double inv_n = 1.0 / (static_cast<double>(B) * L * J * 3);

    const int workers = par::max_workers();
    for (int w = 0; w < workers; ++w) {
        std::vector<ArrayRef> refs;
        grad_buffers_[w].collect(refs);
        for (auto& r : refs) std::fill(r.data->begin(), r.data->end(), 0.0);
    }
    std::vector<double> loss_parts(B, 0.0);
    const int n_bn = 2 * cfg_.num_blocks;
    const int C = cfg_.channels;
    std::vector<std::vector<double>> bn_mean_sum(workers), bn_var_sum(workers);
    for (int w = 0; w < workers; ++w) {
        bn_mean_sum[w].assign(static_cast<size_t>(n_bn) * C, 0.0);
        bn_var_sum[w].assign(static_cast<size_t>(n_bn) * C, 0.0);
    }

    par::for_each_index(B, [&](int bi) {
        const int worker = par::current_thread();
        const ClipData& cd = train_clips_[clip_indices[bi]];
        Rng rng = seeds_.stream(0xD4a3, epoch_tag, static_cast<uint64_t>(clip_indices[bi]));

        OcclusionMask mask = cfg_.resample_occlusion
                                 ? generate_mask(cfg_.occlusion, L, J, dataset_.skeleton, rng)
                                 : cd.fixed_mask;
        const Pose2D x2d_masked = apply_mask(cd.clip.x2d, mask);
        const Tensor cond = make_conditioner(x2d_masked, cd.clip.meta.image_size);

        const int t = rng.uniform_int(1, cfg_.T);
        Pose3D eps(L, J, 3);
        for (auto& v : eps.v) v = rng.normal();
        const Pose3D x_t = forward_sample(cd.x3d_model, t, eps, sched_);

        Tensor e3d = embed_noisy_pose(x_t, model_.w_theta);
        DenoiserWorkspace& ws = workspaces_[worker];
        Pose3D eps_hat =
            predict_noise(model_, e3d, cond, t, RunMode::Train, &rng, &ws);

        double sse = 0.0;
        Pose3D d_eps(L, J, 3);
        for (size_t i = 0; i < eps.size(); ++i) {
            const double r = eps_hat.v[i] - eps.v[i];
            sse += r * r;
            d_eps.v[i] = 2.0 * r * inv_n;
        }
        loss_parts[bi] = sse;

        Denoiser& g = grad_buffers_[worker];
        Tensor d_e3d;
        predict_noise_backward(model_, ws, cond, d_eps, g, d_e3d);
        linear_backward(model_.w_theta, x_t, d_e3d, g.w_theta, nullptr);

        for (int blk = 0; blk < cfg_.num_blocks; ++blk) {
            const BatchNormCache* caches[2] = {&ws.blocks[blk].bnc1, &ws.blocks[blk].bnc2};
            for (int half = 0; half < 2; ++half) {
                const size_t base = (static_cast<size_t>(blk) * 2 + half) * C;
                for (int ch = 0; ch < C; ++ch) {
                    const double inv = caches[half]->inv_std[ch];
                    bn_mean_sum[worker][base + ch] += caches[half]->mean[ch];
                    bn_var_sum[worker][base + ch] += 1.0 / (inv * inv) - model_.blocks[blk].bn1.eps;
                }
            }
        }
    });

    // Merge worker gradients in worker order, then one Adam step.
    std::vector<ArrayRef> grads0;
    grad_buffers_[0].collect(grads0);
    for (int w = 1; w < workers; ++w) {
        std::vector<ArrayRef> gw;
        grad_buffers_[w].collect(gw);
        for (size_t a = 0; a < grads0.size(); ++a)
            for (size_t i = 0; i < grads0[a].data->size(); ++i)
                (*grads0[a].data)[i] += (*gw[a].data)[i];
    }

    const double loss = pairwise_sum(loss_parts) * inv_n;
    if (!std::isfinite(loss)) {
        divergence_dump(loss, static_cast<int>(epoch_tag));
        throw std::runtime_error("train_step: non-finite loss at epoch tag " +
                                 std::to_string(epoch_tag));
    }

    std::vector<ArrayRef> params;
    model_.collect(params);
    adam_.step(params, grads0, lr_);

    // Running batch-norm update: one step per optimizer step with the batch
    // average of the per-clip statistics.
    const double momentum = 0.1;
    for (int w = 1; w < workers; ++w)
        for (size_t i = 0; i < bn_mean_sum[0].size(); ++i) {
            bn_mean_sum[0][i] += bn_mean_sum[w][i];
            bn_var_sum[0][i] += bn_var_sum[w][i];
        }
    for (int blk = 0; blk < cfg_.num_blocks; ++blk) {
        BatchNormLayer* bns[2] = {&model_.blocks[blk].bn1, &model_.blocks[blk].bn2};
        for (int half = 0; half < 2; ++half) {
            const size_t base = (static_cast<size_t>(blk) * 2 + half) * C;
            for (int ch = 0; ch < C; ++ch) {
                const double bm = bn_mean_sum[0][base + ch] / B;
                const double bv = bn_var_sum[0][base + ch] / B;
                bns[half]->run_mean[ch] = (1.0 - momentum) * bns[half]->run_mean[ch] + momentum * bm;
                bns[half]->run_var[ch] = (1.0 - momentum) * bns[half]->run_var[ch] + momentum * bv;
            }
        }
    }
    return loss;
}

double Trainer::eval_mpjpe(const std::string& split_name, int hypotheses) {
    const std::vector<ClipData>* clips = nullptr;
    std::vector<ClipData> other;
    if (split_name == eval_split_) {
        clips = &eval_clips_;
    } else {
        for (auto& clip : dataset_.clips(split_name, cfg_.sequence_length, cfg_.stride)) {
            ClipData cd;
            ModelSpaceClip ms = to_model_space(clip, stats_, dataset_.skeleton.root);
            cd.x3d_model = std::move(ms.x3d_model);
            cd.root_trajectory = std::move(ms.root_trajectory);
            cd.clip = std::move(clip);
            other.push_back(std::move(cd));
        }
        clips = &other;
    }
    if (clips->empty()) throw std::runtime_error("eval: split '" + split_name + "' is empty");

    DenoiserSampler sampler(model_);
    const int n = static_cast<int>(clips->size());
    std::vector<double> errs(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const ClipData& cd = (*clips)[i];
        Rng mask_rng = seeds_.stream(0xE7a1, static_cast<uint64_t>(i));
        OcclusionMask mask = generate_mask(cfg_.occlusion, cfg_.sequence_length,
                                           dataset_.skeleton.joint_count, dataset_.skeleton, mask_rng);
        const Pose2D x2d_masked = apply_mask(cd.clip.x2d, mask);
        const Tensor cond = make_conditioner(x2d_masked, cd.clip.meta.image_size);
        auto hyps = sample_hypotheses(sampler, cond, hypotheses, sched_, seeds_,
                                      seeds_.derive(0xE7a2, static_cast<uint64_t>(i)));
        const Pose3D agg = aggregate(hyps);
        const Pose3D pred = from_model_space(agg, cd.root_trajectory, stats_, dataset_.skeleton.root);
        errs[i] = mpjpe(pred, cd.clip.x3d, dataset_.skeleton.root);
    }
    return pairwise_sum(errs) / n;
}

void Trainer::restore(const TrainerState& state) {
    start_epoch_ = state.epoch;
    lr_ = state.learning_rate;
    plateau_.best = state.plateau_best;
    plateau_.bad_count = state.plateau_bad_count;
    adam_.set_step_count(state.adam_step);
    if (adam_.m().size() != state.adam_m.size() || adam_.v().size() != state.adam_v.size())
        throw std::runtime_error("restore: optimizer state does not match the model");
    adam_.m() = state.adam_m;
    adam_.v() = state.adam_v;
}

void Trainer::divergence_dump(double loss, int epoch) {
    if (cfg_.out.empty()) return;
    fs::create_directories(cfg_.out);
    const std::string path = (fs::path(cfg_.out) / "diverged_dump.ckpt").string();
    TrainerState ts;
    ts.epoch = epoch;
    ts.learning_rate = lr_;
    ts.best_metric = loss;
    ts.adam_step = adam_.step_count();
    ts.adam_m = adam_.m();
    ts.adam_v = adam_.v();
    save_diffusion_checkpoint(path, model_, sched_, stats_,
                              cfg_.mode == "diffhpe_wrapper" ? ConditionMode::Wrapper
                                                             : ConditionMode::Raw2D,
                              &ts);
}

FitResult Trainer::fit() {
    FitResult res;
    res.best_eval_mpjpe_mm = std::numeric_limits<double>::infinity();
    res.best_epoch = 0;

    std::ofstream log_out;
    if (!cfg_.out.empty()) {
        fs::create_directories(cfg_.out);
        res.log_path = (fs::path(cfg_.out) / "train_log.jsonl").string();
        log_out.open(res.log_path, start_epoch_ > 0 ? std::ios::app : std::ios::out);
    }

    const ConditionMode mode =
        cfg_.mode == "diffhpe_wrapper" ? ConditionMode::Wrapper : ConditionMode::Raw2D;

    std::vector<int> order(train_clips_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = start_epoch_ + 1; epoch <= cfg_.epochs; ++epoch) {
        Rng shuffle_rng = seeds_.stream(0x5F1E, static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_sse_weighted = 0.0;
        int seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const size_t end = std::min(order.size(), start + cfg_.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            const double loss = train_step(batch, static_cast<uint64_t>(epoch));
            epoch_sse_weighted += loss * static_cast<double>(batch.size());
            seen += static_cast<int>(batch.size());
        }
        const double epoch_loss = epoch_sse_weighted / seen;

        if (epoch % cfg_.eval_every == 0 || epoch == cfg_.epochs) {
            const double metric = eval_mpjpe(eval_split_, cfg_.eval_hypotheses);
            TrainLogEntry entry{epoch, epoch_loss, metric, lr_};
            res.log.push_back(entry);
            if (log_out) {
                nlohmann::json rec = {{"epoch", epoch},
                                      {"loss", epoch_loss},
                                      {"eval_mpjpe_mm", metric},
                                      {"learning_rate", lr_}};
                log_out << rec.dump() << "\n" << std::flush;
            }

            if (metric < res.best_eval_mpjpe_mm) {
                res.best_eval_mpjpe_mm = metric;
                res.best_epoch = epoch;
                res.best_model = model_;
                if (!cfg_.out.empty()) {
                    res.best_checkpoint_path = (fs::path(cfg_.out) / "best.ckpt").string();
                    save_diffusion_checkpoint(res.best_checkpoint_path, model_, sched_, stats_, mode);
                }
            }
            lr_ = plateau_.update(lr_, metric);

            if (!cfg_.out.empty()) {
                TrainerState ts;
                ts.epoch = epoch;
                ts.learning_rate = lr_;
                ts.best_metric = res.best_eval_mpjpe_mm;
                ts.best_epoch = res.best_epoch;
                ts.plateau_best = plateau_.best;
                ts.plateau_bad_count = plateau_.bad_count;
                ts.adam_step = adam_.step_count();
                ts.adam_m = adam_.m();
                ts.adam_v = adam_.v();
                res.last_checkpoint_path = (fs::path(cfg_.out) / "last.ckpt").string();
                save_diffusion_checkpoint(res.last_checkpoint_path, model_, sched_, stats_, mode, &ts);
            }
        }
    }
    if (res.best_epoch == 0) {
        res.best_model = model_;
        res.best_epoch = start_epoch_;
    }
    return res;
}

// ------------------------------------------------------------ fit_toy_backbone

double fit_toy_backbone(ToyBackbone& backbone, const Dataset& dataset,
                        const NormalizationStats& stats, const ToyFitOptions& opt) {
    backbone.check_mutable();
    if (stats.fitted_on != "train")
        throw std::logic_error("fit_toy_backbone: normalization stats must come from the train split");

    struct Sample {
        Pose2D x2d;
        Pose3D target;
        ImageSize image;
    };
    std::vector<Sample> samples;
    for (const auto& clip : dataset.clips("train", opt.sequence_length, opt.stride)) {
        ModelSpaceClip ms = to_model_space(clip, stats, dataset.skeleton.root);
        samples.push_back({clip.x2d, std::move(ms.x3d_model), clip.meta.image_size});
    }
    if (samples.empty()) throw std::runtime_error("fit_toy_backbone: empty training split");

    std::vector<ArrayRef> params;
    backbone.collect(params);
    Adam adam(0.9, 0.999, 1e-8, 0.0);
    adam.attach(params);

    SeedSequence seeds(opt.seed);
    NeighborIndex nbr = NeighborIndex::build(dataset.skeleton);

    ToyBackbone grad = backbone;  // same structure, zeroed below
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    double last_loss = 0.0;
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        Rng shuffle_rng = seeds.stream(0x70B1, static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double epoch_sse = 0.0;
        size_t epoch_count = 0;
        for (size_t start = 0; start < order.size(); start += opt.batch_size) {
            const size_t end = std::min(order.size(), start + opt.batch_size);
            std::vector<ArrayRef> grefs;
            grad.collect(grefs);
            for (auto& r : grefs) std::fill(r.data->begin(), r.data->end(), 0.0);

            double batch_sse = 0.0;
            size_t batch_coords = 0;
            for (size_t k = start; k < end; ++k) {
                const Sample& s = samples[order[k]];
                Rng rng = seeds.stream(0x70B2, static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(order[k]));
                OcclusionMask mask =
                    generate_mask(opt.occlusion, s.x2d.d0, s.x2d.d1, dataset.skeleton, rng);
                const Pose2D masked = apply_mask(s.x2d, mask);
                const Tensor x2dn = condition_raw2d(masked, s.image).tensor;

                Tensor lin_out, feat, feat_relu;
                Pose3D pred;
                backbone.forward_normalized(x2dn, lin_out, feat, feat_relu, pred);

                batch_coords += pred.size();
                Pose3D d_pred(pred.d0, pred.d1, 3);
                for (size_t i = 0; i < pred.size(); ++i) {
                    const double r = pred.v[i] - s.target.v[i];
                    batch_sse += r * r;
                    d_pred.v[i] = 2.0 * r;
                }

                Tensor d_feat_relu(feat_relu.d0, feat_relu.d1, backbone.feature_channels());
                linear_backward(backbone.head, feat_relu, d_pred, grad.head, &d_feat_relu);
                Tensor d_feat(feat.d0, feat.d1, backbone.feature_channels());
                relu_backward(feat, d_feat_relu, d_feat);
                Tensor d_lin(lin_out.d0, lin_out.d1, backbone.feature_channels());
                graph_conv_backward(backbone.gcn, nbr, lin_out, d_feat, grad.gcn, &d_lin);
                linear_backward(backbone.input, x2dn, d_lin, grad.input, nullptr);
            }

            const double inv = 1.0 / static_cast<double>(batch_coords);
            for (auto& r : grefs)
                for (auto& v : *r.data) v *= inv;
            adam.step(params, grefs, opt.learning_rate);
            epoch_sse += batch_sse;
            epoch_count += batch_coords;
        }
        last_loss = epoch_sse / static_cast<double>(epoch_count);
        if (!std::isfinite(last_loss))
            throw std::runtime_error("fit_toy_backbone: non-finite loss at epoch " +
                                     std::to_string(epoch));
    }
    return last_loss;
}

}  // namespace diffhpe
