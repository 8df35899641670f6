#include "diffhpe/metrics.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "diffhpe/parallel.hpp"

namespace diffhpe {

double mpjpe(const Pose3D& pred, const Pose3D& gt, int root_index) {
    check_same_shape(pred, gt, "mpjpe");
    if (root_index < 0 || root_index >= pred.d1)
        throw std::invalid_argument("mpjpe: root index out of range");
    const int L = pred.d0, J = pred.d1;
    double total = 0.0;
    for (int l = 0; l < L; ++l) {
        const double* pr = pred.row(l, root_index);
        const double* gr = gt.row(l, root_index);
        const double off[3] = {gr[0] - pr[0], gr[1] - pr[1], gr[2] - pr[2]};
        for (int j = 0; j < J; ++j) {
            const double* p = pred.row(l, j);
            const double* g = gt.row(l, j);
            const double dx = p[0] + off[0] - g[0];
            const double dy = p[1] + off[1] - g[1];
            const double dz = p[2] + off[2] - g[2];
            total += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return 1000.0 * total / (static_cast<double>(L) * J);
}

double symmetry_gap(const std::vector<Pose3D>& preds, const SkeletonGraph& graph) {
    if (preds.empty()) throw std::invalid_argument("symmetry_gap: need at least one clip");
    const int S_left = static_cast<int>(graph.left_segments.size());
    if (S_left == 0) throw std::invalid_argument("symmetry_gap: skeleton has no sided segments");
    std::vector<double> per_clip(preds.size(), 0.0);
    par::for_each_index(static_cast<int>(preds.size()), [&](int i) {
        const Matrix y = segment_lengths(preds[i], graph);
        double acc = 0.0;
        for (int l = 0; l < y.rows; ++l)
            for (int k = 0; k < S_left; ++k)
                acc += std::abs(y.at(l, graph.left_segments[k]) - y.at(l, graph.tau(k)));
        per_clip[i] = acc / (static_cast<double>(y.rows) * S_left);
    });
    return pairwise_sum(per_clip) / static_cast<double>(preds.size());
}

double temporal_std(const std::vector<Pose3D>& preds, const SkeletonGraph& graph) {
    if (preds.empty()) throw std::invalid_argument("temporal_std: need at least one clip");
    const int S = graph.segment_count();
    std::vector<double> per_clip(preds.size(), 0.0);
    par::for_each_index(static_cast<int>(preds.size()), [&](int i) {
        const Matrix y = segment_lengths(preds[i], graph);
        const int L = y.rows;
        double acc = 0.0;
        for (int s = 0; s < S; ++s) {
            double mean = 0.0;
            for (int l = 0; l < L; ++l) mean += y.at(l, s);
            mean /= L;
            double var = 0.0;
            for (int l = 0; l < L; ++l) {
                const double d = y.at(l, s) - mean;
                var += d * d;
            }
            acc += std::sqrt(var / L);  // population std
        }
        per_clip[i] = acc / S;
    });
    return pairwise_sum(per_clip) / static_cast<double>(preds.size());
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "model=" << model << " pattern=" << pattern << " H=" << hypotheses << " seed=" << seed
       << " clips=" << clip_count << " mpjpe_mm=" << mpjpe_mm
       << " per_hypothesis_mpjpe_mm=" << per_hypothesis_mpjpe_mm
       << " symmetry_gap_mm=" << symmetry_gap_mm << " temporal_std_mm=" << temporal_std_mm;
    return os.str();
}

std::string EvalReport::to_json_text() const {
    nlohmann::json j;
    j["model"] = model;
    j["pattern"] = pattern;
    j["hypotheses"] = hypotheses;
    j["seed"] = seed;
    j["clip_count"] = clip_count;
    j["mpjpe_mm"] = mpjpe_mm;
    j["per_hypothesis_mpjpe_mm"] = per_hypothesis_mpjpe_mm;
    j["symmetry_gap_mm"] = symmetry_gap_mm;
    j["temporal_std_mm"] = temporal_std_mm;
    return j.dump(2);
}

std::string EvalReport::csv_header() const {
    return "model,pattern,hypotheses,seed,clip_count,mpjpe_mm,per_hypothesis_mpjpe_mm,"
           "symmetry_gap_mm,temporal_std_mm";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os << model << "," << pattern << "," << hypotheses << "," << seed << "," << clip_count << ","
       << mpjpe_mm << "," << per_hypothesis_mpjpe_mm << "," << symmetry_gap_mm << ","
       << temporal_std_mm;
    return os.str();
}

CrossDomainMatrix cross_domain_matrix(const std::vector<std::string>& train_patterns,
                                      const std::vector<std::string>& test_patterns,
                                      const CellEvaluator& evaluate) {
    CrossDomainMatrix m;
    m.train_patterns = train_patterns;
    m.test_patterns = test_patterns;
    m.values = Matrix(static_cast<int>(train_patterns.size()), static_cast<int>(test_patterns.size()));
    for (int r = 0; r < m.values.rows; ++r)
        for (int c = 0; c < m.values.cols; ++c) m.values.at(r, c) = evaluate(r, c);
    return m;
}

CrossDomainMatrix difference_matrix(const CrossDomainMatrix& a, const CrossDomainMatrix& b) {
    if (a.values.rows != b.values.rows || a.values.cols != b.values.cols)
        throw std::invalid_argument("difference_matrix: mismatched matrix shapes");
    CrossDomainMatrix d = a;
    for (size_t i = 0; i < d.values.v.size(); ++i) d.values.v[i] = a.values.v[i] - b.values.v[i];
    return d;
}

std::string CrossDomainMatrix::to_csv() const {
    std::ostringstream os;
    os << "train\\test";
    for (const auto& t : test_patterns) os << "," << t;
    os << "\n";
    for (int r = 0; r < values.rows; ++r) {
        os << train_patterns[r];
        for (int c = 0; c < values.cols; ++c) os << "," << values.at(r, c);
        os << "\n";
    }
    return os.str();
}

}  // namespace diffhpe
