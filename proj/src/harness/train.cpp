#include "dicos/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dicos/numerics/ops.hpp"
#include "dicos/numerics/optim.hpp"

namespace dicos::harness {

namespace {

std::vector<std::vector<double>> snapshot(const ParameterStore& store) {
    std::vector<std::vector<double>> out;
    for (const auto& p : store.all()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

void restore(ParameterStore& store, const std::vector<std::vector<double>>& values) {
    auto params = store.all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
    }
}

// Global gradient norm; throws NumericError on a non-finite entry.
double grad_norm(const ParameterStore& store) {
    double sq = 0.0;
    for (const auto& p : store.all()) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

bool all_finite(const ParameterStore& store) {
    for (const auto& p : store.all()) {
        for (double v : p.tensor.data()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

void scale_grads(ParameterStore& store, double factor) {
    for (const auto& p : store.all()) {
        Tensor t = p.tensor;
        if (!t.has_grad()) continue;
        for (auto& g : t.mutable_grad()) g *= factor;
    }
}

}  // namespace

TrainResult train(Model& model, const corpus::DialogueCorpus& corpus, std::ostream* log,
                  const EpochCallback& on_epoch) {
    const TrainConfig& cfg = model.config();
    ParameterStore& store = model.params();
    TrainResult result;
    if (cfg.epochs == 0 || corpus.dialogues.empty()) return result;

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamW optimizer(store, {0.9, 0.999, 1e-8, cfg.weight_decay});
    std::vector<bool> is_update_head;
    for (const auto& p : store.all()) is_update_head.push_back(p.name.rfind("update.", 0) == 0);

    const std::size_t n = corpus.dialogues.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    const std::size_t warmup_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.warmup * static_cast<double>(total_steps))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> lr(store.size());
    store.zero_grad();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.epoch = epoch;
        std::size_t turns = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const auto last_good = snapshot(store);
            try {
                for (std::size_t b = begin; b < end; ++b) {
                    const corpus::Dialogue& d = corpus.dialogues[order[b]];
                    const double weight = 1.0 / static_cast<double>(d.size() * (end - begin));
                    for (int T = 1; T <= static_cast<int>(d.size()); ++T) {
                        Tape tape;
                        TapeGuard guard(tape);
                        TurnLoss loss = model.turn_loss(d, T, rng);
                        if (!std::isfinite(loss.total.item())) throw NumericError("non-finite loss");
                        tape.backward(ops::scale(loss.total, weight));
                        stats.loss += loss.total.item();
                        stats.update += loss.update;
                        stats.extractive += loss.extractive;
                        stats.classification += loss.classification;
                        ++turns;
                    }
                }
                const double norm = grad_norm(store);
                if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) scale_grads(store, cfg.clip_norm / norm);
            } catch (const NumericError& e) {
                restore(store, last_good);
                throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
            }
            const double warm = std::min(1.0, static_cast<double>(result.steps + 1) / static_cast<double>(warmup_steps));
            for (std::size_t i = 0; i < lr.size(); ++i) lr[i] = (is_update_head[i] ? cfg.lr_update : cfg.lr) * warm;
            optimizer.step(lr);
            if (!all_finite(store)) {
                restore(store, last_good);
                throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                      ": non-finite parameters after an update");
            }
            store.zero_grad();
            ++result.steps;
        }
        const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, turns));
        stats.loss *= inv;
        stats.update *= inv;
        stats.extractive *= inv;
        stats.classification *= inv;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.epochs.push_back(stats);
        if (log) {
            *log << "epoch " << epoch << " loss " << stats.loss << " update " << stats.update << " ext "
                 << stats.extractive << " cls " << stats.classification << " (" << stats.seconds << " s)\n";
            log->flush();
        }
        if (on_epoch && !on_epoch(stats)) break;
    }
    return result;
}

}  // namespace dicos::harness
