#include "diffhpe/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace diffhpe {

void DenoiserConfig::validate() const {
    if (num_blocks < 1) throw std::invalid_argument("denoiser: num_blocks must be >= 1");
    if (channels < 1) throw std::invalid_argument("denoiser: channels must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw std::invalid_argument("denoiser: dropout must be in [0, 1)");
    if (time_embedding_dim < 2 || time_embedding_dim % 2 != 0)
        throw std::invalid_argument("denoiser: time_embedding_dim must be even and >= 2");
    if (condition_channels < 1) throw std::invalid_argument("denoiser: condition_channels must be >= 1");
    if (time_kernel < 1 || time_kernel % 2 == 0)
        throw std::invalid_argument("denoiser: time_kernel must be odd and >= 1");
}

std::vector<double> time_embedding(int t, int dim) {
    const int half = dim / 2;
    std::vector<double> e(dim);
    for (int i = 0; i < half; ++i) {
        const double freq =
            half > 1 ? std::pow(10000.0, -static_cast<double>(i) / (half - 1)) : 1.0;
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

void ResidualBlock::collect(std::vector<ArrayRef>& out, const std::string& prefix) {
    step_proj.collect(out, prefix + ".step_proj");
    if (time_wise) {
        tconv1.collect(out, prefix + ".tconv1");
        tconv2.collect(out, prefix + ".tconv2");
    } else {
        gconv1.collect(out, prefix + ".gconv1");
        gconv2.collect(out, prefix + ".gconv2");
    }
    bn1.collect(out, prefix + ".bn1");
    bn2.collect(out, prefix + ".bn2");
    non_local.collect(out, prefix + ".non_local");
    mid.collect(out, prefix + ".mid");
    cond_proj.collect(out, prefix + ".cond_proj");
    res_out.collect(out, prefix + ".res_out");
    skip_out.collect(out, prefix + ".skip_out");
}

Denoiser Denoiser::create(const DenoiserConfig& cfg, const SkeletonGraph& graph, uint64_t init_seed) {
    cfg.validate();
    Denoiser d;
    d.config = cfg;
    d.skeleton = graph;
    d.neighbors = NeighborIndex::build(graph);

    Rng rng(SeedSequence(init_seed).derive(0x9e11));
    const int C = cfg.channels;

    d.w_theta.resize(3, C);
    d.w_theta.init_uniform(rng);

    d.blocks.resize(cfg.num_blocks);
    for (int i = 0; i < cfg.num_blocks; ++i) {
        ResidualBlock& blk = d.blocks[i];
        blk.time_wise = i % 2 == 0;
        blk.step_proj.resize(cfg.time_embedding_dim, C);
        blk.step_proj.init_uniform(rng);
        if (blk.time_wise) {
            blk.tconv1.resize(C, cfg.time_kernel);
            blk.tconv1.init_uniform(rng);
            blk.tconv2.resize(C, cfg.time_kernel);
            blk.tconv2.init_uniform(rng);
        } else {
            blk.gconv1.resize(C, C);
            blk.gconv1.init_uniform(rng);
            blk.gconv2.resize(C, C);
            blk.gconv2.init_uniform(rng);
        }
        blk.bn1.resize(C);
        blk.bn2.resize(C);
        blk.non_local.resize(C);
        blk.non_local.init(rng);
        blk.mid.resize(C, 2 * C);
        blk.mid.init_uniform(rng);
        blk.cond_proj.resize(cfg.condition_channels, 2 * C);
        blk.cond_proj.init_uniform(rng);
        blk.res_out.resize(C, C);
        blk.res_out.init_uniform(rng);
        blk.skip_out.resize(C, C);
        blk.skip_out.init_uniform(rng);
    }

    d.out1.resize(C, C);
    d.out1.init_uniform(rng);
    d.out2.resize(C, 3);
    d.out2.zero();
    return d;
}

Denoiser Denoiser::zeros_like() const {
    Denoiser g = *this;
    std::vector<ArrayRef> refs;
    g.collect(refs);
    for (auto& r : refs) std::fill(r.data->begin(), r.data->end(), 0.0);
    return g;
}

void Denoiser::collect(std::vector<ArrayRef>& out) {
    w_theta.collect(out, "w_theta");
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(out, "block" + std::to_string(i));
    out1.collect(out, "out1");
    out2.collect(out, "out2");
}

size_t Denoiser::trainable_count() {
    std::vector<ArrayRef> refs;
    collect(refs);
    size_t n = 0;
    for (const auto& r : refs)
        if (r.trainable) n += r.data->size();
    return n;
}

namespace {

void ensure(Tensor& t, int a, int b, int c) {
    if (t.d0 != a || t.d1 != b || t.d2 != c) t = Tensor(a, b, c);
}

// residual/skip head of one block; writes gate tensors into the cache.
void block_forward(const ResidualBlock& blk, const Tensor& x, const std::vector<double>& t_emb,
                   const Tensor& cond, const NeighborIndex& nbr, double dropout, RunMode mode,
                   Rng* rng, BlockCache& c, Tensor& x_next, Tensor& skip) {
    const int L = x.d0, J = x.d1, C = x.d2;
    const bool training = mode == RunMode::Train;
    const bool use_dropout = training && dropout > 0.0;

    c.x_in = x;
    ensure(c.h0, L, J, C);
    // step embedding: per-block linear projection, broadcast over positions
    Tensor emb_in(1, 1, static_cast<int>(t_emb.size()));
    emb_in.v = t_emb;
    Tensor emb_out(1, 1, C);
    linear_forward(blk.step_proj, emb_in, emb_out);
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < J; ++j) {
            const double* xi = x.row(l, j);
            double* h = c.h0.row(l, j);
            for (int k = 0; k < C; ++k) h[k] = xi[k] + emb_out.v[k];
        }

    Tensor a(L, J, C);
    if (blk.time_wise)
        time_conv_forward(blk.tconv1, c.h0, a);
    else
        graph_conv_forward(blk.gconv1, nbr, c.h0, a);
    ensure(c.b1, L, J, C);
    batchnorm_forward(blk.bn1, a, c.b1, training, &c.bnc1);
    ensure(c.r1, L, J, C);
    relu_forward(c.b1, c.r1);
    if (use_dropout) {
        ensure(c.d1, L, J, C);
        dropout_forward(c.r1, dropout, *rng, c.d1, c.drop1);
    } else {
        c.d1 = c.r1;
        c.drop1.clear();
    }

    if (blk.time_wise)
        time_conv_forward(blk.tconv2, c.d1, a);
    else
        graph_conv_forward(blk.gconv2, nbr, c.d1, a);
    ensure(c.b2, L, J, C);
    batchnorm_forward(blk.bn2, a, c.b2, training, &c.bnc2);
    ensure(c.r2, L, J, C);
    relu_forward(c.b2, c.r2);
    if (use_dropout) {
        ensure(c.d2, L, J, C);
        dropout_forward(c.r2, dropout, *rng, c.d2, c.drop2);
    } else {
        c.d2 = c.r2;
        c.drop2.clear();
    }

    ensure(c.nl_out, L, J, C);
    non_local_forward(blk.non_local, c.d2, c.nl_out, &c.nlc);

    Tensor h(L, J, 2 * C);
    linear_forward(blk.mid, c.nl_out, h);
    Tensor hc(L, J, 2 * C);
    linear_forward(blk.cond_proj, cond, hc);
    for (size_t i = 0; i < h.size(); ++i) h.v[i] += hc.v[i];

    ensure(c.th, L, J, C);
    ensure(c.sg, L, J, C);
    ensure(c.gate, L, J, C);
    const int P = L * J;
    for (int pos = 0; pos < P; ++pos) {
        const double* hv = h.v.data() + static_cast<size_t>(pos) * 2 * C;
        double* th = c.th.v.data() + static_cast<size_t>(pos) * C;
        double* sg = c.sg.v.data() + static_cast<size_t>(pos) * C;
        double* gt = c.gate.v.data() + static_cast<size_t>(pos) * C;
        for (int k = 0; k < C; ++k) {
            th[k] = std::tanh(hv[k]);
            sg[k] = 1.0 / (1.0 + std::exp(-hv[C + k]));
            gt[k] = th[k] * sg[k];
        }
    }

    ensure(x_next, L, J, C);
    linear_forward(blk.res_out, c.gate, x_next);
    const double inv_sqrt2 = 0.7071067811865475244;
    for (size_t i = 0; i < x_next.size(); ++i) x_next.v[i] = (x.v[i] + x_next.v[i]) * inv_sqrt2;

    ensure(skip, L, J, C);
    linear_forward(blk.skip_out, c.gate, skip);
}

void block_backward(const ResidualBlock& blk, const BlockCache& c, const Tensor& cond,
                    const std::vector<double>& t_emb, const NeighborIndex& nbr, double dropout,
                    const Tensor& d_res, const Tensor& d_skip, ResidualBlock& g, Tensor& dx_in) {
    const int L = c.x_in.d0, J = c.x_in.d1, C = c.x_in.d2;
    const int P = L * J;
    const double inv_sqrt2 = 0.7071067811865475244;

    // residual head: x_next = (x + res_out(gate)) / sqrt(2)
    Tensor d_resout(L, J, C);
    for (size_t i = 0; i < d_res.size(); ++i) {
        d_resout.v[i] = d_res.v[i] * inv_sqrt2;
        dx_in.v[i] += d_res.v[i] * inv_sqrt2;
    }
    Tensor d_gate(L, J, C);
    linear_backward(blk.res_out, c.gate, d_resout, g.res_out, &d_gate);
    linear_backward(blk.skip_out, c.gate, d_skip, g.skip_out, &d_gate);

    // gate = tanh(h1) * sigmoid(h2)
    Tensor dh(L, J, 2 * C);
    for (int pos = 0; pos < P; ++pos) {
        const double* th = c.th.v.data() + static_cast<size_t>(pos) * C;
        const double* sg = c.sg.v.data() + static_cast<size_t>(pos) * C;
        const double* dg = d_gate.v.data() + static_cast<size_t>(pos) * C;
        double* d = dh.v.data() + static_cast<size_t>(pos) * 2 * C;
        for (int k = 0; k < C; ++k) {
            d[k] = dg[k] * sg[k] * (1.0 - th[k] * th[k]);
            d[C + k] = dg[k] * th[k] * sg[k] * (1.0 - sg[k]);
        }
    }

    linear_backward(blk.cond_proj, cond, dh, g.cond_proj, nullptr);
    Tensor d_nl(L, J, C);
    linear_backward(blk.mid, c.nl_out, dh, g.mid, &d_nl);

    Tensor d_d2(L, J, C);
    non_local_backward(blk.non_local, c.d2, c.nlc, d_nl, g.non_local, &d_d2);

    Tensor d_r2(L, J, C);
    if (!c.drop2.empty())
        dropout_backward(c.drop2, dropout, d_d2, d_r2);
    else
        d_r2 = d_d2;
    Tensor d_b2(L, J, C);
    relu_backward(c.b2, d_r2, d_b2);
    Tensor d_a2(L, J, C);
    batchnorm_backward(blk.bn2, c.bnc2, d_b2, g.bn2, &d_a2);
    Tensor d_d1(L, J, C);
    if (blk.time_wise)
        time_conv_backward(blk.tconv2, c.d1, d_a2, g.tconv2, &d_d1);
    else
        graph_conv_backward(blk.gconv2, nbr, c.d1, d_a2, g.gconv2, &d_d1);

    Tensor d_r1(L, J, C);
    if (!c.drop1.empty())
        dropout_backward(c.drop1, dropout, d_d1, d_r1);
    else
        d_r1 = d_d1;
    Tensor d_b1(L, J, C);
    relu_backward(c.b1, d_r1, d_b1);
    Tensor d_a1(L, J, C);
    batchnorm_backward(blk.bn1, c.bnc1, d_b1, g.bn1, &d_a1);
    Tensor d_h0(L, J, C);
    if (blk.time_wise)
        time_conv_backward(blk.tconv1, c.h0, d_a1, g.tconv1, &d_h0);
    else
        graph_conv_backward(blk.gconv1, nbr, c.h0, d_a1, g.gconv1, &d_h0);

    for (size_t i = 0; i < d_h0.size(); ++i) dx_in.v[i] += d_h0.v[i];

    Tensor d_emb_out(1, 1, C);
    for (int pos = 0; pos < P; ++pos) {
        const double* d = d_h0.v.data() + static_cast<size_t>(pos) * C;
        for (int k = 0; k < C; ++k) d_emb_out.v[k] += d[k];
    }
    Tensor emb_in(1, 1, static_cast<int>(t_emb.size()));
    emb_in.v = t_emb;
    linear_backward(blk.step_proj, emb_in, d_emb_out, g.step_proj, nullptr);
}

}  // namespace

Pose3D predict_noise(const Denoiser& d, const Tensor& e3d, const Tensor& cond, int t, RunMode mode,
                     Rng* dropout_rng, DenoiserWorkspace* ws) {
    const DenoiserConfig& cfg = d.config;
    const int L = e3d.d0, J = e3d.d1, C = cfg.channels;
    if (e3d.d2 != C)
        throw std::invalid_argument("predict_noise: embedded pose has " + std::to_string(e3d.d2) +
                                    " channels, config expects " + std::to_string(C));
    if (cond.d2 != cfg.condition_channels)
        throw std::invalid_argument("predict_noise: conditioner has " + std::to_string(cond.d2) +
                                    " channels, config expects " +
                                    std::to_string(cfg.condition_channels));
    if (cond.d0 != L || cond.d1 != J)
        throw std::invalid_argument("predict_noise: conditioner frames/joints do not match pose");
    if (J != d.skeleton.joint_count)
        throw std::invalid_argument("predict_noise: pose joints do not match the skeleton");
    if (mode == RunMode::Train && cfg.dropout > 0.0 && dropout_rng == nullptr)
        throw std::invalid_argument("predict_noise: training with dropout needs an rng");

    DenoiserWorkspace local;
    DenoiserWorkspace& w = ws ? *ws : local;
    w.t_emb = time_embedding(t, cfg.time_embedding_dim);
    w.e3d_pre = e3d;
    ensure(w.trunk_in, L, J, C);
    relu_forward(e3d, w.trunk_in);
    w.blocks.resize(cfg.num_blocks);

    ensure(w.skip_sum, L, J, C);
    w.skip_sum.fill(0.0);
    Tensor x = w.trunk_in;
    Tensor x_next, skip;
    for (int i = 0; i < cfg.num_blocks; ++i) {
        block_forward(d.blocks[i], x, w.t_emb, cond, d.neighbors, cfg.dropout, mode, dropout_rng,
                      w.blocks[i], x_next, skip);
        for (size_t k = 0; k < skip.size(); ++k) w.skip_sum.v[k] += skip.v[k];
        std::swap(x, x_next);
    }
    if (cfg.scale_skips) {
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg.num_blocks));
        for (auto& v : w.skip_sum.v) v *= s;
    }

    ensure(w.y1, L, J, C);
    relu_forward(w.skip_sum, w.y1);
    ensure(w.o1, L, J, C);
    linear_forward(d.out1, w.y1, w.o1);
    ensure(w.y2, L, J, C);
    relu_forward(w.o1, w.y2);
    Pose3D eps(L, J, 3);
    linear_forward(d.out2, w.y2, eps);
    return eps;
}

void predict_noise_backward(const Denoiser& d, const DenoiserWorkspace& ws, const Tensor& cond,
                            const Pose3D& d_eps, Denoiser& grads, Tensor& d_e3d) {
    const DenoiserConfig& cfg = d.config;
    const int L = d_eps.d0, J = d_eps.d1, C = cfg.channels;

    Tensor d_y2(L, J, C);
    linear_backward(d.out2, ws.y2, d_eps, grads.out2, &d_y2);
    Tensor d_o1(L, J, C);
    relu_backward(ws.o1, d_y2, d_o1);
    Tensor d_y1(L, J, C);
    linear_backward(d.out1, ws.y1, d_o1, grads.out1, &d_y1);
    Tensor d_skip(L, J, C);
    relu_backward(ws.skip_sum, d_y1, d_skip);
    if (cfg.scale_skips) {
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg.num_blocks));
        for (auto& v : d_skip.v) v *= s;
    }

    Tensor d_x(L, J, C);  // gradient flowing into the residual output of block i
    Tensor d_prev(L, J, C);
    for (int i = cfg.num_blocks - 1; i >= 0; --i) {
        d_prev.fill(0.0);
        block_backward(d.blocks[i], ws.blocks[i], cond, ws.t_emb, d.neighbors, cfg.dropout, d_x,
                       d_skip, grads.blocks[i], d_prev);
        std::swap(d_x, d_prev);
    }

    ensure(d_e3d, L, J, C);
    d_e3d.fill(0.0);
    relu_backward(ws.e3d_pre, d_x, d_e3d);
}

Pose3D DenoiserSampler::predict(const Pose3D& x3d_t, const Tensor& cond, int t) const {
    Tensor e3d(x3d_t.d0, x3d_t.d1, d_.config.channels);
    linear_forward(d_.w_theta, x3d_t, e3d);
    return predict_noise(d_, e3d, cond, t, RunMode::Eval);
}

}  // namespace diffhpe
