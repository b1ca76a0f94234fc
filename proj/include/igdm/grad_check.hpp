#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "igdm/tensor.hpp"

namespace igdm {

// A differentiable scalar function: value plus analytic gradient at a point.
struct scalar_with_grad {
    double value = 0.0;
    tensor grad;
};

// Compares the analytic gradient at `point` against central differences of
// the value, coordinate by coordinate.  Returns the worst relative error
// max_i |analytic_i - central_i| / max(1, |central_i|).  The caller is
// responsible for probing away from nonsmooth points (relu kinks).
template <class F>
double finite_diff_check_coords(F&& scalar_fn, const tensor& point, double h,
                                const std::vector<std::size_t>& coords) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
    scalar_with_grad base = scalar_fn(point);
    check_same_shape(base.grad, point, "finite_diff_check");
    double worst = 0.0;
    for (std::size_t i : coords) {
        if (i >= point.numel()) throw std::out_of_range("finite_diff_check: coordinate out of range");
        tensor p = point;
        p[i] = point[i] + h;
        double fp = scalar_fn(p).value;
        p[i] = point[i] - h;
        double fm = scalar_fn(p).value;
        double central = (fp - fm) / (2.0 * h);
        double err = std::fabs(base.grad[i] - central) / std::max(1.0, std::fabs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

template <class F>
double finite_diff_check(F&& scalar_fn, const tensor& point, double h) {
    std::vector<std::size_t> coords(point.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    return finite_diff_check_coords(scalar_fn, point, h, coords);
}

}  // namespace igdm
