#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dicos/numerics/params.hpp"

namespace dicos {

struct GradCheckOptions {
    double epsilon = 1e-5;
    double tolerance = 1e-6;
    // Error is |analytic - numeric| / max(|analytic|, |numeric|, denominator_floor).
    // The floor keeps near-zero gradients from turning rounding noise into
    // large relative errors.
    double denominator_floor = 1e-3;
    // 0 checks every entry; otherwise a seeded sample of this many entries per parameter.
    std::size_t max_entries_per_param = 0;
    std::uint64_t seed = 0;
};

struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0;
    std::size_t entries_checked = 0;
};

struct GradCheckReport {
    std::vector<ParamGradError> per_param;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `loss` is invoked once under a tape and then twice per checked
/// entry without one; it must be deterministic.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<const Parameter> params,
                           const GradCheckOptions& options = {});

}  // namespace dicos
