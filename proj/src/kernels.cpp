#include "diffhpe/kernels.hpp"

#include <cmath>

#include "diffhpe/parallel.hpp"

namespace diffhpe {

// ---------------------------------------------------------------- LinearLayer

void LinearLayer::resize(int in, int out) {
    in_ch = in;
    out_ch = out;
    W.assign(static_cast<size_t>(in) * out, 0.0);
    b.assign(out, 0.0);
}

void LinearLayer::init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch));
    for (auto& w : W) w = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
}

void LinearLayer::zero() {
    std::fill(W.begin(), W.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
}

void LinearLayer::collect(std::vector<ArrayRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, true});
    out.push_back({prefix + ".b", &b, true});
}

void linear_forward(const LinearLayer& p, const Tensor& x, Tensor& y) {
    const int P = x.d0 * x.d1;
    const int in = p.in_ch, out = p.out_ch;
    par::for_each_index(P, [&](int pos) {
        const double* xi = x.v.data() + static_cast<size_t>(pos) * in;
        double* yo = y.v.data() + static_cast<size_t>(pos) * out;
        for (int o = 0; o < out; ++o) {
            const double* w = p.W.data() + static_cast<size_t>(o) * in;
            double acc = p.b[o];
            for (int i = 0; i < in; ++i) acc += w[i] * xi[i];
            yo[o] = acc;
        }
    });
}

void linear_backward(const LinearLayer& p, const Tensor& x, const Tensor& dy, LinearLayer& grad,
                     Tensor* dx) {
    const int P = x.d0 * x.d1;
    const int in = p.in_ch, out = p.out_ch;
    par::for_each_index(out, [&](int o) {
        double* dw = grad.W.data() + static_cast<size_t>(o) * in;
        double db = 0.0;
        for (int pos = 0; pos < P; ++pos) {
            const double g = dy.v[static_cast<size_t>(pos) * out + o];
            const double* xi = x.v.data() + static_cast<size_t>(pos) * in;
            for (int i = 0; i < in; ++i) dw[i] += g * xi[i];
            db += g;
        }
        grad.b[o] += db;
    });
    if (dx) {
        par::for_each_index(P, [&](int pos) {
            const double* g = dy.v.data() + static_cast<size_t>(pos) * out;
            double* d = dx->v.data() + static_cast<size_t>(pos) * in;
            for (int o = 0; o < out; ++o) {
                const double* w = p.W.data() + static_cast<size_t>(o) * in;
                const double go = g[o];
                for (int i = 0; i < in; ++i) d[i] += w[i] * go;
            }
        });
    }
}

// -------------------------------------------------------------- TimeConvLayer

void TimeConvLayer::resize(int channels, int kernel_size) {
    ch = channels;
    kernel = kernel_size;
    W.assign(static_cast<size_t>(ch) * kernel, 0.0);
    b.assign(ch, 0.0);
}

void TimeConvLayer::init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel));
    for (auto& w : W) w = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
}

void TimeConvLayer::collect(std::vector<ArrayRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, true});
    out.push_back({prefix + ".b", &b, true});
}

void time_conv_forward(const TimeConvLayer& p, const Tensor& x, Tensor& y) {
    const int L = x.d0, J = x.d1, C = x.d2;
    const int off = p.kernel / 2;
    par::for_each_index(L, [&](int l) {
        for (int j = 0; j < J; ++j) {
            double* yo = y.row(l, j);
            for (int c = 0; c < C; ++c) yo[c] = p.b[c];
            for (int k = 0; k < p.kernel; ++k) {
                int src = l + k - off;
                src = src < 0 ? 0 : (src >= L ? L - 1 : src);
                const double* xi = x.row(src, j);
                for (int c = 0; c < C; ++c) yo[c] += p.W[static_cast<size_t>(c) * p.kernel + k] * xi[c];
            }
        }
    });
}

void time_conv_backward(const TimeConvLayer& p, const Tensor& x, const Tensor& dy,
                        TimeConvLayer& grad, Tensor* dx) {
    const int L = x.d0, J = x.d1, C = x.d2;
    const int off = p.kernel / 2;
    par::for_each_index(C, [&](int c) {
        double db = 0.0;
        for (int l = 0; l < L; ++l) {
            for (int j = 0; j < J; ++j) {
                const double g = dy.at(l, j, c);
                db += g;
                for (int k = 0; k < p.kernel; ++k) {
                    int src = l + k - off;
                    src = src < 0 ? 0 : (src >= L ? L - 1 : src);
                    grad.W[static_cast<size_t>(c) * p.kernel + k] += g * x.at(src, j, c);
                }
            }
        }
        grad.b[c] += db;
    });
    if (dx) {
        // Gather form of the scatter above: every (l, k) writing to src
        // contributes W[c,k] * dy[l] to dx[src].
        par::for_each_index(C, [&](int c) {
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < J; ++j) {
                    const double g = dy.at(l, j, c);
                    for (int k = 0; k < p.kernel; ++k) {
                        int src = l + k - off;
                        src = src < 0 ? 0 : (src >= L ? L - 1 : src);
                        dx->at(src, j, c) += p.W[static_cast<size_t>(c) * p.kernel + k] * g;
                    }
                }
        });
    }
}

// -------------------------------------------------------------- NeighborIndex

NeighborIndex NeighborIndex::build(const SkeletonGraph& graph) {
    NeighborIndex n;
    n.J = graph.joint_count;
    std::vector<std::vector<int>> lists(n.J);
    for (const auto& [p, d] : graph.edges) {
        lists[p].push_back(d);
        lists[d].push_back(p);
    }
    n.offsets.resize(n.J + 1, 0);
    for (int j = 0; j < n.J; ++j) n.offsets[j + 1] = n.offsets[j] + static_cast<int>(lists[j].size());
    n.nbrs.reserve(n.offsets[n.J]);
    for (const auto& l : lists) n.nbrs.insert(n.nbrs.end(), l.begin(), l.end());
    n.inv_deg.resize(n.J);
    for (int j = 0; j < n.J; ++j) {
        const int deg = n.offsets[j + 1] - n.offsets[j];
        n.inv_deg[j] = deg > 0 ? 1.0 / deg : 0.0;
    }
    return n;
}

// -------------------------------------------------------------- GraphConvLayer

void GraphConvLayer::resize(int in, int out) {
    in_ch = in;
    out_ch = out;
    W_self.assign(static_cast<size_t>(in) * out, 0.0);
    W_nbr.assign(static_cast<size_t>(in) * out, 0.0);
    b.assign(out, 0.0);
}

void GraphConvLayer::init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch));
    for (auto& w : W_self) w = rng.uniform(-bound, bound);
    for (auto& w : W_nbr) w = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
}

void GraphConvLayer::collect(std::vector<ArrayRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".W_self", &W_self, true});
    out.push_back({prefix + ".W_nbr", &W_nbr, true});
    out.push_back({prefix + ".b", &b, true});
}

static void aggregate_neighbors(const NeighborIndex& nbr, const Tensor& x, Tensor& agg) {
    const int L = x.d0, J = x.d1, C = x.d2;
    par::for_each_index(L, [&](int l) {
        for (int j = 0; j < J; ++j) {
            double* a = agg.row(l, j);
            std::fill(a, a + C, 0.0);
            for (int k = nbr.offsets[j]; k < nbr.offsets[j + 1]; ++k) {
                const double* xi = x.row(l, nbr.nbrs[k]);
                for (int c = 0; c < C; ++c) a[c] += xi[c];
            }
            const double s = nbr.inv_deg[j];
            for (int c = 0; c < C; ++c) a[c] *= s;
        }
    });
}

void graph_conv_forward(const GraphConvLayer& p, const NeighborIndex& nbr, const Tensor& x,
                        Tensor& y) {
    const int L = x.d0, J = x.d1;
    const int in = p.in_ch, out = p.out_ch;
    Tensor agg(L, J, in);
    aggregate_neighbors(nbr, x, agg);
    const int P = L * J;
    par::for_each_index(P, [&](int pos) {
        const double* xi = x.v.data() + static_cast<size_t>(pos) * in;
        const double* ai = agg.v.data() + static_cast<size_t>(pos) * in;
        double* yo = y.v.data() + static_cast<size_t>(pos) * out;
        for (int o = 0; o < out; ++o) {
            const double* ws = p.W_self.data() + static_cast<size_t>(o) * in;
            const double* wn = p.W_nbr.data() + static_cast<size_t>(o) * in;
            double acc = p.b[o];
            for (int i = 0; i < in; ++i) acc += ws[i] * xi[i] + wn[i] * ai[i];
            yo[o] = acc;
        }
    });
}

void graph_conv_backward(const GraphConvLayer& p, const NeighborIndex& nbr, const Tensor& x,
                         const Tensor& dy, GraphConvLayer& grad, Tensor* dx) {
    const int L = x.d0, J = x.d1;
    const int in = p.in_ch, out = p.out_ch;
    const int P = L * J;
    Tensor agg(L, J, in);
    aggregate_neighbors(nbr, x, agg);

    par::for_each_index(out, [&](int o) {
        double* dws = grad.W_self.data() + static_cast<size_t>(o) * in;
        double* dwn = grad.W_nbr.data() + static_cast<size_t>(o) * in;
        double db = 0.0;
        for (int pos = 0; pos < P; ++pos) {
            const double g = dy.v[static_cast<size_t>(pos) * out + o];
            const double* xi = x.v.data() + static_cast<size_t>(pos) * in;
            const double* ai = agg.v.data() + static_cast<size_t>(pos) * in;
            for (int i = 0; i < in; ++i) {
                dws[i] += g * xi[i];
                dwn[i] += g * ai[i];
            }
            db += g;
        }
        grad.b[o] += db;
    });

    if (dx) {
        // s = W_nbr^T dy is the gradient w.r.t. the aggregate; dx gathers it
        // back through the (symmetric) adjacency with the source degrees.
        Tensor s(L, J, in);
        par::for_each_index(P, [&](int pos) {
            const double* g = dy.v.data() + static_cast<size_t>(pos) * out;
            double* si = s.v.data() + static_cast<size_t>(pos) * in;
            double* di = dx->v.data() + static_cast<size_t>(pos) * in;
            std::fill(si, si + in, 0.0);
            for (int o = 0; o < out; ++o) {
                const double* ws = p.W_self.data() + static_cast<size_t>(o) * in;
                const double* wn = p.W_nbr.data() + static_cast<size_t>(o) * in;
                const double go = g[o];
                for (int i = 0; i < in; ++i) {
                    di[i] += ws[i] * go;
                    si[i] += wn[i] * go;
                }
            }
        });
        par::for_each_index(L, [&](int l) {
            for (int i = 0; i < J; ++i) {
                double* di = dx->row(l, i);
                for (int k = nbr.offsets[i]; k < nbr.offsets[i + 1]; ++k) {
                    const int j = nbr.nbrs[k];
                    const double* sj = s.row(l, j);
                    const double f = nbr.inv_deg[j];
                    for (int c = 0; c < in; ++c) di[c] += f * sj[c];
                }
            }
        });
    }
}

// -------------------------------------------------------------- BatchNormLayer

void BatchNormLayer::resize(int channels) {
    ch = channels;
    gamma.assign(ch, 1.0);
    beta.assign(ch, 0.0);
    run_mean.assign(ch, 0.0);
    run_var.assign(ch, 1.0);
}

void BatchNormLayer::collect(std::vector<ArrayRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, true});
    out.push_back({prefix + ".beta", &beta, true});
    out.push_back({prefix + ".run_mean", &run_mean, false});
    out.push_back({prefix + ".run_var", &run_var, false});
}

void batchnorm_forward(const BatchNormLayer& p, const Tensor& x, Tensor& y, bool training,
                       BatchNormCache* cache) {
    const int P = x.d0 * x.d1;
    const int C = p.ch;
    if (!training) {
        for (int pos = 0; pos < P; ++pos) {
            const double* xi = x.v.data() + static_cast<size_t>(pos) * C;
            double* yo = y.v.data() + static_cast<size_t>(pos) * C;
            for (int c = 0; c < C; ++c)
                yo[c] = p.gamma[c] * (xi[c] - p.run_mean[c]) / std::sqrt(p.run_var[c] + p.eps) +
                        p.beta[c];
        }
        return;
    }

    cache->mean.assign(C, 0.0);
    cache->inv_std.assign(C, 0.0);
    std::vector<double> var(C, 0.0);
    for (int pos = 0; pos < P; ++pos) {
        const double* xi = x.v.data() + static_cast<size_t>(pos) * C;
        for (int c = 0; c < C; ++c) cache->mean[c] += xi[c];
    }
    for (int c = 0; c < C; ++c) cache->mean[c] /= P;
    for (int pos = 0; pos < P; ++pos) {
        const double* xi = x.v.data() + static_cast<size_t>(pos) * C;
        for (int c = 0; c < C; ++c) {
            const double d = xi[c] - cache->mean[c];
            var[c] += d * d;
        }
    }
    for (int c = 0; c < C; ++c) {
        var[c] /= P;
        cache->inv_std[c] = 1.0 / std::sqrt(var[c] + p.eps);
    }
    cache->xhat = Tensor(x.d0, x.d1, C);
    for (int pos = 0; pos < P; ++pos) {
        const double* xi = x.v.data() + static_cast<size_t>(pos) * C;
        double* xh = cache->xhat.v.data() + static_cast<size_t>(pos) * C;
        double* yo = y.v.data() + static_cast<size_t>(pos) * C;
        for (int c = 0; c < C; ++c) {
            xh[c] = (xi[c] - cache->mean[c]) * cache->inv_std[c];
            yo[c] = p.gamma[c] * xh[c] + p.beta[c];
        }
    }
}

void batchnorm_backward(const BatchNormLayer& p, const BatchNormCache& cache, const Tensor& dy,
                        BatchNormLayer& grad, Tensor* dx) {
    const int P = dy.d0 * dy.d1;
    const int C = p.ch;
    std::vector<double> s1(C, 0.0), s2(C, 0.0);
    for (int pos = 0; pos < P; ++pos) {
        const double* g = dy.v.data() + static_cast<size_t>(pos) * C;
        const double* xh = cache.xhat.v.data() + static_cast<size_t>(pos) * C;
        for (int c = 0; c < C; ++c) {
            s1[c] += g[c];
            s2[c] += g[c] * xh[c];
        }
    }
    for (int c = 0; c < C; ++c) {
        grad.beta[c] += s1[c];
        grad.gamma[c] += s2[c];
    }
    if (dx) {
        for (int pos = 0; pos < P; ++pos) {
            const double* g = dy.v.data() + static_cast<size_t>(pos) * C;
            const double* xh = cache.xhat.v.data() + static_cast<size_t>(pos) * C;
            double* d = dx->v.data() + static_cast<size_t>(pos) * C;
            for (int c = 0; c < C; ++c)
                d[c] += p.gamma[c] * cache.inv_std[c] * (g[c] - s1[c] / P - xh[c] * s2[c] / P);
        }
    }
}

// ------------------------------------------------------------------ relu/drop

void relu_forward(const Tensor& x, Tensor& y) {
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

void relu_backward(const Tensor& x_pre, const Tensor& dy, Tensor& dx) {
    for (size_t i = 0; i < dy.size(); ++i)
        if (x_pre.v[i] > 0.0) dx.v[i] += dy.v[i];
}

void dropout_forward(const Tensor& x, double rate, Rng& rng, Tensor& y, std::vector<uint8_t>& mask) {
    mask.resize(x.size());
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    for (size_t i = 0; i < x.size(); ++i) {
        mask[i] = rng.uniform() < keep ? 1 : 0;
        y.v[i] = mask[i] ? x.v[i] * scale : 0.0;
    }
}

void dropout_backward(const std::vector<uint8_t>& mask, double rate, const Tensor& dy, Tensor& dx) {
    const double scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < dy.size(); ++i)
        if (mask[i]) dx.v[i] += dy.v[i] * scale;
}

// --------------------------------------------------------------- NonLocalLayer

void NonLocalLayer::resize(int channels) {
    ch = channels;
    inner = channels / 2 > 0 ? channels / 2 : 1;
    theta.resize(ch, inner);
    phi.resize(ch, inner);
    g.resize(ch, inner);
    out.resize(inner, ch);
}

void NonLocalLayer::init(Rng& rng) {
    theta.init_uniform(rng);
    phi.init_uniform(rng);
    g.init_uniform(rng);
    out.zero();  // fresh layer behaves as the identity
}

void NonLocalLayer::collect(std::vector<ArrayRef>& o, const std::string& prefix) {
    theta.collect(o, prefix + ".theta");
    phi.collect(o, prefix + ".phi");
    g.collect(o, prefix + ".g");
    out.collect(o, prefix + ".out");
}

void non_local_forward(const NonLocalLayer& p, const Tensor& x, Tensor& y, NonLocalCache* cache) {
    const int L = x.d0, J = x.d1, C = x.d2;
    const int D = p.inner;
    NonLocalCache local;
    NonLocalCache& c = cache ? *cache : local;
    c.q = Tensor(L, J, D);
    c.k = Tensor(L, J, D);
    c.v = Tensor(L, J, D);
    c.attn = Tensor(L, J, J);
    c.u = Tensor(L, J, D);
    linear_forward(p.theta, x, c.q);
    linear_forward(p.phi, x, c.k);
    linear_forward(p.g, x, c.v);

    par::for_each_index(L, [&](int l) {
        for (int i = 0; i < J; ++i) {
            double* row = c.attn.row(l, i);
            const double* qi = c.q.row(l, i);
            double mx = -1e300;
            for (int j = 0; j < J; ++j) {
                const double* kj = c.k.row(l, j);
                double e = 0.0;
                for (int d = 0; d < D; ++d) e += qi[d] * kj[d];
                row[j] = e;
                if (e > mx) mx = e;
            }
            double z = 0.0;
            for (int j = 0; j < J; ++j) {
                row[j] = std::exp(row[j] - mx);
                z += row[j];
            }
            for (int j = 0; j < J; ++j) row[j] /= z;
            double* ui = c.u.row(l, i);
            std::fill(ui, ui + D, 0.0);
            for (int j = 0; j < J; ++j) {
                const double* vj = c.v.row(l, j);
                const double a = row[j];
                for (int d = 0; d < D; ++d) ui[d] += a * vj[d];
            }
        }
    });

    linear_forward(p.out, c.u, y);
    for (size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
    (void)C;
}

void non_local_backward(const NonLocalLayer& p, const Tensor& x, const NonLocalCache& cache,
                        const Tensor& dy, NonLocalLayer& grad, Tensor* dx) {
    const int L = x.d0, J = x.d1;
    const int D = p.inner;

    if (dx)
        for (size_t i = 0; i < dy.size(); ++i) dx->v[i] += dy.v[i];  // residual path

    Tensor du(L, J, D);
    linear_backward(p.out, cache.u, dy, grad.out, &du);

    Tensor dq(L, J, D), dk(L, J, D), dv(L, J, D);
    par::for_each_index(L, [&](int l) {
        std::vector<double> dattn(J), de(J);
        for (int i = 0; i < J; ++i) {
            const double* dui = du.row(l, i);
            const double* arow = cache.attn.row(l, i);
            double r = 0.0;
            for (int j = 0; j < J; ++j) {
                const double* vj = cache.v.row(l, j);
                double a = 0.0;
                for (int d = 0; d < D; ++d) a += dui[d] * vj[d];
                dattn[j] = a;
                r += arow[j] * a;
                double* dvj = dv.row(l, j);
                for (int d = 0; d < D; ++d) dvj[d] += arow[j] * dui[d];
            }
            double* dqi = dq.row(l, i);
            const double* qi = cache.q.row(l, i);
            for (int j = 0; j < J; ++j) {
                de[j] = arow[j] * (dattn[j] - r);
                const double* kj = cache.k.row(l, j);
                double* dkj = dk.row(l, j);
                for (int d = 0; d < D; ++d) {
                    dqi[d] += de[j] * kj[d];
                    dkj[d] += de[j] * qi[d];
                }
            }
        }
    });

    linear_backward(p.theta, x, dq, grad.theta, dx);
    linear_backward(p.phi, x, dk, grad.phi, dx);
    linear_backward(p.g, x, dv, grad.g, dx);
}

}  // namespace diffhpe
