#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "rltc/model.hpp"

namespace rltc::testsupport {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    long checked = 0;
};

// Central finite differences over every parameter entry, compared against the
// analytic gradients. The objective must recompute the scalar from the
// (perturbed) params; it never touches the analytic path.
template <typename Objective>
GradCheckResult finite_difference_check(ModelParams& params, const GradientStore& analytic,
                                        Objective&& objective, double step = 1e-5) {
    GradCheckResult res;
    auto prefs = named_tensors(params);
    auto grefs = named_tensors(analytic);
    for (size_t i = 0; i < prefs.size(); ++i) {
        Mat& pm = *prefs[i].mat;
        const Mat& gm = *grefs[i].mat;
        for (int r = 0; r < pm.rows(); ++r) {
            for (int c = 0; c < pm.cols(); ++c) {
                const double saved = pm(r, c);
                pm(r, c) = saved + step;
                const double f_plus = objective();
                pm(r, c) = saved - step;
                const double f_minus = objective();
                pm(r, c) = saved;
                const double fd = (f_plus - f_minus) / (2.0 * step);
                const double g = gm(r, c);
                const double denom = std::max(std::abs(g) + std::abs(fd), 1e-4);
                const double rel = std::abs(g - fd) / denom;
                if (rel > res.max_rel_err) {
                    res.max_rel_err = rel;
                    res.worst_tensor = prefs[i].name;
                }
                ++res.checked;
            }
        }
    }
    return res;
}

} // namespace rltc::testsupport
