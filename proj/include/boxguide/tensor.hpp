#ifndef BOXGUIDE_TENSOR_HPP
#define BOXGUIDE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace boxguide {

// 2D scalar field over a pixel grid, row-major, indexed as (x, y).
struct Grid {
    int w = 0;
    int h = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int w_, int h_, double fill = 0.0) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, fill) {}

    double& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }
};

// Boolean pixel mask, same layout as Grid.
struct Mask {
    int w = 0;
    int h = 0;
    std::vector<char> v;

    Mask() = default;
    Mask(int w_, int h_, bool fill = false)
        : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, fill ? 1 : 0) {}

    bool at(int x, int y) const { return v[static_cast<size_t>(y) * w + x] != 0; }
    void set(int x, int y, bool b) { v[static_cast<size_t>(y) * w + x] = b ? 1 : 0; }
    size_t count() const {
        size_t n = 0;
        for (char c : v) n += (c != 0);
        return n;
    }
};

// Dense row-major matrix (rows x cols).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Dense row-major rank-3 tensor (n0 x n1 x n2).
struct Tensor3 {
    int n0 = 0, n1 = 0, n2 = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int a, int b, int c, double fill = 0.0)
        : n0(a), n1(b), n2(c), v(static_cast<size_t>(a) * b * c, fill) {}

    double& at(int i, int j, int k) { return v[(static_cast<size_t>(i) * n1 + j) * n2 + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<size_t>(i) * n1 + j) * n2 + k]; }
    bool same_shape(const Tensor3& o) const { return n0 == o.n0 && n1 == o.n1 && n2 == o.n2; }
};

// Dense row-major rank-4 tensor (n0 x n1 x n2 x n3); latents are (N_F, C, h, w).
struct Tensor4 {
    int n0 = 0, n1 = 0, n2 = 0, n3 = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int a, int b, int c, int d, double fill = 0.0)
        : n0(a), n1(b), n2(c), n3(d), v(static_cast<size_t>(a) * b * c * d, fill) {}

    double& at(int i, int j, int k, int l) {
        return v[((static_cast<size_t>(i) * n1 + j) * n2 + k) * n3 + l];
    }
    double at(int i, int j, int k, int l) const {
        return v[((static_cast<size_t>(i) * n1 + j) * n2 + k) * n3 + l];
    }
    bool same_shape(const Tensor4& o) const {
        return n0 == o.n0 && n1 == o.n1 && n2 == o.n2 && n3 == o.n3;
    }
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace boxguide

#endif  // BOXGUIDE_TENSOR_HPP
