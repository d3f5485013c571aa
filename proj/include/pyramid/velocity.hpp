#pragma once

// Common interface for anything that predicts a velocity from a noisy input
// and its natural level: the exact oracle, affine denoisers, test fields.

#include "pyramid/core.hpp"

#include <functional>

namespace pyramid {

class VelocityModel {
public:
    virtual ~VelocityModel() = default;
    // Column-wise prediction; x is on the stage grid.
    [[nodiscard]] virtual Batch predict(const Batch& x, double eta, int stage) const = 0;
    [[nodiscard]] Tensor predict(const Tensor& x, double eta, int stage) const;
};

struct AffineMap {
    Matrix A;
    Vector b;

    [[nodiscard]] Vector apply(const Vector& x) const { return A * x + b; }
    [[nodiscard]] Matrix apply(const Matrix& x) const { return (A * x).colwise() + b; }
    static AffineMap zero(Eigen::Index dim) { return {Matrix::Zero(dim, dim), Vector::Zero(dim)}; }
    static AffineMap identity(Eigen::Index dim) { return {Matrix::Identity(dim, dim), Vector::Zero(dim)}; }
};

// Wraps a callable; handy for constant or linear test fields.
class FunctionVelocity : public VelocityModel {
public:
    using Fn = std::function<Matrix(const Matrix& x, double eta, int stage)>;
    explicit FunctionVelocity(Fn fn) : fn_(std::move(fn)) {}
    [[nodiscard]] Batch predict(const Batch& x, double eta, int stage) const override {
        return Batch(x.grid, fn_(x.values, eta, stage));
    }

private:
    Fn fn_;
};

}  // namespace pyramid
