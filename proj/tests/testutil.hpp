#pragma once

#include "debias/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace debias::testutil {

// Relative error between an analytic derivative and a finite-difference
// estimate; values that are both negligible count as exact.
inline double grad_rel_err(double analytic, double numeric) {
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < 1e-7) return 0.0;
    return std::abs(analytic - numeric) / mag;
}

// Max relative error over all entries of `param`, comparing `analytic`
// against central finite differences of the loss closure. The closure must
// recompute the loss from current parameter values.
template <typename LossFn>
double max_rel_err(Matrix& param, const Matrix& analytic, LossFn&& loss, double h = 1e-5) {
    double worst = 0.0;
    for (Index r = 0; r < param.rows(); ++r) {
        for (Index c = 0; c < param.cols(); ++c) {
            const double saved = param(r, c);
            param(r, c) = saved + h;
            const double hi = loss();
            param(r, c) = saved - h;
            const double lo = loss();
            param(r, c) = saved;
            const double numeric = (hi - lo) / (2.0 * h);
            worst = std::max(worst, grad_rel_err(analytic(r, c), numeric));
        }
    }
    return worst;
}

template <typename LossFn>
double max_rel_err(Vector& param, const Vector& analytic, LossFn&& loss, double h = 1e-5) {
    double worst = 0.0;
    for (Index i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double hi = loss();
        param[i] = saved - h;
        const double lo = loss();
        param[i] = saved;
        const double numeric = (hi - lo) / (2.0 * h);
        worst = std::max(worst, grad_rel_err(analytic[i], numeric));
    }
    return worst;
}

// Finite-difference check of one layer's accumulated gradients.
template <typename LossFn>
double max_rel_err_layer(AffineLayer& layer, const Matrix& grad_weight, const Vector& grad_bias,
                         LossFn&& loss, double h = 1e-5) {
    const double w = max_rel_err(layer.weight, grad_weight, loss, h);
    const double b = max_rel_err(layer.bias, grad_bias, loss, h);
    return std::max(w, b);
}

} // namespace debias::testutil
