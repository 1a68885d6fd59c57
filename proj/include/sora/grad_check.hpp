#pragma once

#include <cmath>
#include <cstdlib>

#include "sora/ops.hpp"

namespace sora {

// Compares reverse-mode gradients of a scalar function against central
// differences. The autodiff side runs on the f32 graph exactly as training
// would; the finite-difference side re-evaluates the same generic callable
// in f64 so the probe itself contributes no rounding noise.
//
// Returns max over coordinates of |autodiff - central| / (|central| + 1e-8).
template <class F>
double grad_check(F&& f, const Tensor& x, double eps) {
    if (eps < 1e-6 || eps > 1e-3) throw DomainError("grad_check: eps must lie in [1e-6, 1e-3]");

    Tensor leaf = x.detached(/*requires_grad=*/true);
    Tensor out = f(leaf);
    if (out.numel() != 1) throw DimensionError("grad_check: f must return a scalar");
    if (!std::isfinite(static_cast<double>(out.item())))
        throw ValueError("grad_check: f(x) is not finite");
    backward(out);
    std::vector<float> autodiff = leaf.grad();

    DTensor xd = x.cast<double>();
    std::vector<double> base(xd.data().begin(), xd.data().end());

    NoGradGuard ng;
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> vp = base, vm = base;
        vp[i] += eps;
        vm[i] -= eps;
        double fp = f(DTensor::from_data(xd.shape(), std::move(vp))).item();
        double fm = f(DTensor::from_data(xd.shape(), std::move(vm))).item();
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw ValueError("grad_check: f(x +/- eps) is not finite");
        double central = (fp - fm) / (2.0 * eps);
        double rel = std::abs(static_cast<double>(autodiff[i]) - central) /
                     (std::abs(central) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace sora
