#include "pyramid/velocity.hpp"

namespace pyramid {

Tensor VelocityModel::predict(const Tensor& x, double eta, int stage) const {
    const Batch b(x.grid(), Matrix(x.values()));
    return predict(b, eta, stage).sample(0);
}

}  // namespace pyramid
