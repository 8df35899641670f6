#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffhpe/skeleton.hpp"
#include "diffhpe/tensor.hpp"

namespace diffhpe {

// Accuracy and coherence summary for one model/pattern pair. Poses go in as
// meters; every reported value is millimeters.
struct EvalReport {
    std::string model;
    std::string pattern = "none";
    int hypotheses = 1;
    uint64_t seed = 0;
    int clip_count = 0;  // K
    double mpjpe_mm = 0.0;
    double per_hypothesis_mpjpe_mm = 0.0;  // diagnostic: mean over hypotheses
    double symmetry_gap_mm = 0.0;
    double temporal_std_mm = 0.0;

    std::string to_text() const;
    std::string to_json_text() const;
    std::string csv_header() const;
    std::string csv_row() const;
};

// Protocol-1 position error: per frame, translate pred so its root lands on
// the gt root, then average the per-joint Euclidean distances. Meters in,
// millimeters out.
double mpjpe(const Pose3D& pred, const Pose3D& gt, int root_index);

// Mean absolute left/right segment-length difference over clips, frames and
// left segments; millimeters.
double symmetry_gap(const std::vector<Pose3D>& preds, const SkeletonGraph& graph);

// Mean over clips and segments of the time-wise population standard deviation
// of each segment-length series; millimeters.
double temporal_std(const std::vector<Pose3D>& preds, const SkeletonGraph& graph);

// Evaluates `metric(model_for(train_pattern), test_pattern)` for every
// (row, column) pair. Cell evaluation is delegated so stub models and real
// checkpoints share the harness.
struct CrossDomainMatrix {
    std::vector<std::string> train_patterns;  // rows
    std::vector<std::string> test_patterns;   // columns
    Matrix values;

    std::string to_csv() const;
};

using CellEvaluator = std::function<double(int train_row, int test_col)>;

CrossDomainMatrix cross_domain_matrix(const std::vector<std::string>& train_patterns,
                                      const std::vector<std::string>& test_patterns,
                                      const CellEvaluator& evaluate);

// a - b: positive cells favor method b on lower-is-better metrics.
CrossDomainMatrix difference_matrix(const CrossDomainMatrix& a, const CrossDomainMatrix& b);

}  // namespace diffhpe
