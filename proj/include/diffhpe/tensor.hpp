#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffhpe {

// Dense 3-D array, row-major [d0][d1][d2]. Pose clips are L x J x 3 (or x 2),
// hidden activations are L x J x C.
struct Tensor {
    int d0 = 0, d1 = 0, d2 = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int a, int b, int c) : d0(a), d1(b), d2(c), v(static_cast<size_t>(a) * b * c, 0.0) {}

    static Tensor zeros(int a, int b, int c) { return Tensor(a, b, c); }

    double& at(int i, int j, int k) { return v[(static_cast<size_t>(i) * d1 + j) * d2 + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<size_t>(i) * d1 + j) * d2 + k]; }

    double* row(int i, int j) { return v.data() + (static_cast<size_t>(i) * d1 + j) * d2; }
    const double* row(int i, int j) const { return v.data() + (static_cast<size_t>(i) * d1 + j) * d2; }

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return d0 == o.d0 && d1 == o.d1 && d2 == o.d2; }
    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    std::string shape_str() const {
        return std::to_string(d0) + "x" + std::to_string(d1) + "x" + std::to_string(d2);
    }
};

// 2D keypoints in pixel space, L x J x 2.
using Pose2D = Tensor;
// 3D keypoints, L x J x 3. Camera frame in meters, or standardized model space.
using Pose3D = Tensor;

struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch, " + a.shape_str() +
                                    " vs " + b.shape_str());
}

// Summation with pairwise recursion so clip-level reductions have a
// deterministic, threading-independent order.
double pairwise_sum(const double* x, size_t n);
double pairwise_sum(const std::vector<double>& x);

}  // namespace diffhpe
