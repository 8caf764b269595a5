#include "dicos/update/update_predictor.hpp"

#include <cmath>

#include "dicos/numerics/ops.hpp"

namespace dicos::update {

UpdateDecision threshold_updates(const std::vector<double>& scores, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw encoder::ConfigError("update_threshold must lie in (0, 1), got " + std::to_string(delta));
    }
    UpdateDecision out;
    out.scores = scores;
    out.update.resize(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) {
        out.update[j] = scores[j] > delta;
        if (out.update[j]) out.selected.insert(j);
    }
    return out;
}

UpdatePredictor::UpdatePredictor(ParameterStore& store, std::size_t d)
    : hidden_(Linear::create(store, "update.hidden", d, d)), output_(Linear::create(store, "update.out", d, 1)) {}

Tensor UpdatePredictor::logits(const encoder::EncodedTurn& current) const {
    Tensor slots = ops::gather_rows(current.hidden, current.layout.slot_pos);
    return output_(ops::relu(hidden_(slots)));
}

UpdateDecision UpdatePredictor::predict(const encoder::EncodedTurn& current, double delta) const {
    NoGradGuard no_grad;
    Tensor z = logits(current);
    std::vector<double> scores(z.numel());
    for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = 1.0 / (1.0 + std::exp(-z.at(j)));
    return threshold_updates(scores, delta);
}

Tensor update_loss(const Tensor& logits, const std::set<std::size_t>& gold) {
    const std::size_t J = logits.numel();
    std::vector<double> sign(J, -1.0);
    for (auto j : gold) {
        if (j >= J) throw std::out_of_range("update_loss: gold slot " + std::to_string(j) + " out of range");
        sign[j] = 1.0;
    }
    // -log sigmoid(+z) for positives, -log sigmoid(-z) for negatives
    Tensor signed_logits = ops::mul(logits, Tensor(logits.shape(), std::move(sign)));
    return ops::scale(ops::mean(ops::log_sigmoid(signed_logits)), -1.0);
}

}  // namespace dicos::update
