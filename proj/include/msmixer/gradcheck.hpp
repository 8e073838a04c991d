#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "msmixer/params.hpp"

namespace msmixer {

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    std::string worst;  // "name[index]" of the worst entry
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps exactly-zero gradients from
/// dividing by zero; it sits far below any gradient the checks care about.
inline double relative_error(double analytic, double numeric, double floor = 1e-10) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Central finite differences over every scalar of every parameter.
/// `loss` evaluates the scalar objective at the current parameter values;
/// `analytic` must have filled the store's grad buffers beforehand.
inline GradCheckReport check_gradients(ParamStore<double>& store, const std::function<double()>& loss,
                                       double step = 1e-4) {
    GradCheckReport report;
    for (auto& p : store.entries()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double up = loss();
            p.value[i] = saved - step;
            const double down = loss();
            p.value[i] = saved;
            GradCheckEntry e{p.name, i, p.grad[i], (up - down) / (2.0 * step), 0.0};
            e.rel_error = relative_error(e.analytic, e.numeric);
            if (e.rel_error > report.max_rel_error) {
                report.max_rel_error = e.rel_error;
                report.worst = p.name + "[" + std::to_string(i) + "]";
            }
            report.entries.push_back(std::move(e));
        }
    }
    return report;
}

}  // namespace msmixer
