#include "pyramid/core.hpp"

#include <sstream>

namespace pyramid {

std::string Grid::str() const {
    std::ostringstream os;
    os << frames << "x" << height << "x" << width << "x" << channels;
    return os.str();
}

void require_valid(const Grid& g) {
    if (!g.valid()) throw std::invalid_argument("grid extents must be positive, got " + g.str());
}

Tensor::Tensor(const Grid& g) : Tensor(g, 0.0) {}

Tensor::Tensor(const Grid& g, double fill) : grid_(g) {
    require_valid(g);
    values_ = Vector::Constant(static_cast<Eigen::Index>(g.size()), fill);
}

Tensor::Tensor(const Grid& g, Vector values) : grid_(g), values_(std::move(values)) {
    require_valid(g);
    if (static_cast<std::size_t>(values_.size()) != g.size())
        throw std::invalid_argument("tensor value count does not match grid " + g.str());
}

static void require_same(const Grid& a, const Grid& b) {
    if (!(a == b)) throw std::invalid_argument("shape mismatch: " + a.str() + " vs " + b.str());
}

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same(grid_, o.grid_);
    values_ += o.values_;
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    require_same(grid_, o.grid_);
    values_ -= o.values_;
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    values_ *= s;
    return *this;
}

Batch::Batch(const Grid& g, Matrix v) : grid(g), values(std::move(v)) {
    require_valid(g);
    if (static_cast<std::size_t>(values.rows()) != g.size())
        throw std::invalid_argument("batch row count does not match grid " + g.str());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a.grid(), b.grid());
    if (a.size() == 0) return 0.0;
    return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

double dot(const Tensor& a, const Tensor& b) {
    require_same(a.grid(), b.grid());
    return a.values().dot(b.values());
}

}  // namespace pyramid
