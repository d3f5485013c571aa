#pragma once

// Dense double-precision tensors over small (T, H, W, C) grids.
//
// Layout is row-major over (t, h, w, c): the flat index of element
// (t, h, w, c) is ((t * H + h) * W + w) * C + c. Every explicit matrix in the
// library (analysis matrices, covariances, affine maps) indexes coordinates
// in this order.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace pyramid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Axis { T = 0, H = 1, W = 2 };

struct Grid {
    int frames = 1;
    int height = 1;
    int width = 1;
    int channels = 1;

    [[nodiscard]] std::size_t size() const {
        return static_cast<std::size_t>(frames) * height * width * channels;
    }
    [[nodiscard]] int extent(Axis a) const {
        switch (a) {
            case Axis::T: return frames;
            case Axis::H: return height;
            case Axis::W: return width;
        }
        return 0;
    }
    [[nodiscard]] std::array<int, 4> dims() const { return {frames, height, width, channels}; }
    [[nodiscard]] std::size_t index(int t, int h, int w, int c) const {
        return ((static_cast<std::size_t>(t) * height + h) * width + w) * channels + c;
    }
    [[nodiscard]] bool valid() const { return frames > 0 && height > 0 && width > 0 && channels > 0; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Grid&, const Grid&) = default;
};

// Throws std::invalid_argument unless every extent is positive.
void require_valid(const Grid& g);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(const Grid& g);
    Tensor(const Grid& g, double fill);
    Tensor(const Grid& g, Vector values);

    [[nodiscard]] const Grid& grid() const { return grid_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    [[nodiscard]] const Vector& values() const { return values_; }
    Vector& values() { return values_; }

    double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
    double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
    double& at(int t, int h, int w, int c = 0) {
        return values_[static_cast<Eigen::Index>(grid_.index(t, h, w, c))];
    }
    [[nodiscard]] double at(int t, int h, int w, int c = 0) const {
        return values_[static_cast<Eigen::Index>(grid_.index(t, h, w, c))];
    }

    [[nodiscard]] bool all_finite() const { return values_.allFinite(); }

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }

private:
    Grid grid_{};
    Vector values_{};
};

// A set of same-shaped tensors stored column-wise: column j is sample j.
struct Batch {
    Grid grid{};
    Matrix values{};

    Batch() = default;
    Batch(const Grid& g, Eigen::Index count) : grid(g), values(Matrix::Zero(static_cast<Eigen::Index>(g.size()), count)) {}
    Batch(const Grid& g, Matrix v);

    [[nodiscard]] Eigen::Index count() const { return values.cols(); }
    [[nodiscard]] Eigen::Index dim() const { return values.rows(); }
    [[nodiscard]] Tensor sample(Eigen::Index j) const { return Tensor(grid, values.col(j)); }
};

// Max-abs difference; throws std::invalid_argument on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

}  // namespace pyramid
