#pragma once

#include <memory>
#include <random>
#include <set>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/encoder/encoder.hpp"
#include "dicos/generator/generator.hpp"
#include "dicos/harness/config.hpp"
#include "dicos/numerics/params.hpp"
#include "dicos/selector/selector.hpp"
#include "dicos/update/update_predictor.hpp"

namespace dicos::harness {

enum class SelectionMode { dicos, granularity };

SelectionMode parse_mode(const std::string& name);
const char* mode_name(SelectionMode mode);

struct InferenceOptions {
    SelectionMode mode = SelectionMode::dicos;
    selector::PerspectiveMask mask;
    std::size_t k = 2;
};

struct SlotTrace {
    std::size_t slot = 0;
    std::vector<int> selected;  // U_D before any windowing
    std::vector<int> fed;       // turns present in C
    std::vector<double> history_scores;
    generator::ValuePrediction prediction;
    std::size_t dropped_turns = 0;
};

struct TurnTrace {
    int turn = 0;
    update::UpdateDecision decision;
    std::vector<SlotTrace> updates;      // one per slot in U_s
    std::vector<SlotTrace> diagnostics;  // extra slots requested by the caller
    corpus::DialogueState state;
};

/// Loss terms of one training turn.
struct TurnLoss {
    Tensor total;
    double update = 0.0;
    double extractive = 0.0;
    double classification = 0.0;
};

/// Every trainable component on one parameter store. Not movable: the
/// generator keeps references to the shared pieces.
class Model {
public:
    Model(const TrainConfig& config, corpus::SlotSchema schema, encoder::Vocabulary vocab);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const TrainConfig& config() const { return config_; }
    const corpus::SlotSchema& schema() const { return schema_; }
    const encoder::Vocabulary& vocab() const { return vocab_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    const encoder::Encoder& encoder() const { return encoder_; }
    const update::UpdatePredictor& update_head() const { return update_; }
    const selector::Selector& selector() const { return selector_; }
    const generator::Generator& generator() const { return generator_; }

    /// Teacher-forced loss at turn T: gold B_{T-1}, gold U_s and gold
    /// latest-update turns. Must run under an active tape to train.
    TurnLoss turn_loss(const corpus::Dialogue& dialogue, int T, std::mt19937_64& rng) const;

    /// One tracked-inference step from `prev_state`; `history` holds the
    /// states B_1..B_{T-1} used for latest-update turns. Slots in
    /// `diagnostic_slots` are also run through selection and generation
    /// without touching the returned state.
    TurnTrace predict_turn(const corpus::Dialogue& dialogue, int T, const corpus::DialogueState& prev_state,
                           const std::vector<corpus::DialogueState>& history, const InferenceOptions& options,
                           const std::set<std::size_t>& diagnostic_slots = {},
                           encoder::EncodingCache* cache = nullptr) const;

private:
    struct SlotRun {
        SlotTrace trace;
        generator::SlotOutputs outputs;
        generator::RefinedContext ctx;
    };
    SlotRun run_slot(const corpus::Dialogue& dialogue, int T, const corpus::DialogueState& prev_state,
                     const encoder::EncodedTurnBatch& batch, std::size_t slot, const std::vector<int>& latest,
                     const InferenceOptions& options, bool train, std::mt19937_64& rng,
                     std::map<std::vector<std::size_t>, Tensor>& contexts) const;

    TrainConfig config_;
    corpus::SlotSchema schema_;
    encoder::Vocabulary vocab_;
    ParameterStore store_;
    encoder::Encoder encoder_;
    update::UpdatePredictor update_;
    selector::Selector selector_;
    generator::Generator generator_;
};

}  // namespace dicos::harness
