#pragma once

#include <set>
#include <vector>

#include "dicos/encoder/encoder.hpp"
#include "dicos/numerics/params.hpp"

namespace dicos::update {

struct UpdateDecision {
    std::vector<double> scores;  // per slot, in [0, 1]
    std::vector<bool> update;
    std::set<std::size_t> selected;  // U_s
};

/// Thresholds scores at delta; delta must lie in (0, 1).
UpdateDecision threshold_updates(const std::vector<double>& scores, double delta);

/// Per-slot update-vs-inherit head: sigmoid(MLP([SLOT]^j of H_T)).
class UpdatePredictor {
public:
    UpdatePredictor() = default;
    UpdatePredictor(ParameterStore& store, std::size_t d);

    /// Pre-sigmoid scores [J x 1].
    Tensor logits(const encoder::EncodedTurn& current) const;
    UpdateDecision predict(const encoder::EncodedTurn& current, double delta) const;

    const Linear& hidden() const { return hidden_; }
    const Linear& output() const { return output_; }

private:
    Linear hidden_;
    Linear output_;
};

/// Mean binary cross-entropy over all J slots, computed from logits.
Tensor update_loss(const Tensor& logits, const std::set<std::size_t>& gold);

}  // namespace dicos::update
