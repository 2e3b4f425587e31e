#include "gma3d/numkern/finite_diff.hpp"

#include <cmath>
#include <string>

#include "gma3d/errors.hpp"

namespace gma3d::numkern {

DenseArray finite_diff_grad(const std::function<double(const DenseArray&)>& f,
                            const DenseArray& x, double eps) {
  DenseArray grad = DenseArray::zeros(x.shape());
  DenseArray probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    probe[i] = original + eps;
    const double up = f(probe);
    probe[i] = original - eps;
    const double down = f(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: non-finite evaluation at coordinate " +
                               std::to_string(i),
                           i);
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace gma3d::numkern
