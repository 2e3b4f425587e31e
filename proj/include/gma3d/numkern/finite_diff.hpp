#pragma once

#include <functional>

#include "gma3d/numkern/dense_array.hpp"

namespace gma3d::numkern {

inline constexpr double kFiniteDiffStep = 1e-5;

// Central differences (f(x + eps·e_i) - f(x - eps·e_i)) / (2·eps) for every
// coordinate i. A non-finite evaluation throws NumericalError carrying i.
DenseArray finite_diff_grad(const std::function<double(const DenseArray&)>& f,
                            const DenseArray& x, double eps = kFiniteDiffStep);

}  // namespace gma3d::numkern
