#pragma once

#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/harness/model.hpp"

namespace dicos::harness {

/// Non-finite loss or gradient. Parameters are restored to the values they
/// held before the failing step.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean per-turn total loss
    double update = 0.0;
    double extractive = 0.0;
    double classification = 0.0;
    double seconds = 0.0;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochStats&)>;

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::size_t steps = 0;
};

/// AdamW over the model's parameters, one optimizer step per `batch_size`
/// dialogues, linear warmup then a constant rate. Deterministic given the
/// config seed.
TrainResult train(Model& model, const corpus::DialogueCorpus& corpus, std::ostream* log = nullptr,
                  const EpochCallback& on_epoch = {});

}  // namespace dicos::harness
