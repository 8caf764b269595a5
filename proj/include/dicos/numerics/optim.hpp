#pragma once

#include <cstddef>
#include <vector>

#include "dicos/numerics/params.hpp"

namespace dicos {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay (matrices only; vectors such as biases
/// and layer-norm gains are not decayed). Each parameter carries its own
/// learning rate so heads can train at different rates.
class AdamW {
public:
    AdamW(const ParameterStore& store, AdamWOptions options = {});

    /// lr_for[i] is the learning rate of store.all()[i] for this step.
    void step(const std::vector<double>& lr_for);
    std::size_t steps_taken() const { return t_; }

private:
    const ParameterStore& store_;
    AdamWOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

}  // namespace dicos
