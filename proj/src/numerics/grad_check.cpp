#include "dicos/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dicos {

namespace {
double evaluate(const std::function<Tensor()>& loss) {
    NoGradGuard no_grad;
    Tensor out = loss();
    double v = out.item();
    if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
    return v;
}
}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<const Parameter> params,
                           const GradCheckOptions& options) {
    if (!(options.epsilon > 0.0 && options.epsilon <= 1e-2)) {
        throw std::invalid_argument("grad_check: epsilon must lie in (0, 1e-2]");
    }
    for (const auto& p : params) {
        Tensor t = p.tensor;
        if (!t.requires_grad()) throw std::invalid_argument("grad_check: parameter " + p.name + " is not tracked");
        t.zero_grad();
    }
    {
        Tape tape;
        TapeGuard guard(tape);
        Tensor out = loss();
        if (!std::isfinite(out.item())) throw NumericError("grad_check: loss is not finite");
        if (out.requires_grad()) tape.backward(out);
    }

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    for (const auto& p : params) {
        Tensor t = p.tensor;
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<std::size_t> entries(t.numel());
        std::iota(entries.begin(), entries.end(), std::size_t{0});
        if (options.max_entries_per_param != 0 && entries.size() > options.max_entries_per_param) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_entries_per_param);
            std::sort(entries.begin(), entries.end());
        }
        ParamGradError err{p.name, 0.0, 0.0, entries.size()};
        auto data = t.mutable_data();
        for (auto i : entries) {
            const double saved = data[i];
            data[i] = saved + options.epsilon;
            const double up = evaluate(loss);
            data[i] = saved - options.epsilon;
            const double down = evaluate(loss);
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * options.epsilon);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.denominator_floor});
            err.max_rel_error = std::max(err.max_rel_error, std::abs(analytic[i] - numeric) / denom);
            err.max_abs_analytic = std::max(err.max_abs_analytic, std::abs(analytic[i]));
        }
        report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
        report.per_param.push_back(std::move(err));
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

}  // namespace dicos
