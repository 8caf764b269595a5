#include "dicos/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dicos {

AdamW::AdamW(const ParameterStore& store, AdamWOptions options) : store_(store), options_(options) {
    for (const auto& p : store_.all()) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step(const std::vector<double>& lr_for) {
    auto params = store_.all();
    if (lr_for.size() != params.size()) throw std::invalid_argument("AdamW::step: one learning rate per parameter");
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor t = params[k].tensor;
        if (!t.has_grad()) continue;
        auto data = t.mutable_data();
        auto grad = t.grad();
        const double lr = lr_for[k];
        const bool decay = t.dim() >= 2;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * grad[i];
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
            double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
            if (decay) update += options_.weight_decay * data[i];
            data[i] -= lr * update;
        }
    }
}

}  // namespace dicos
