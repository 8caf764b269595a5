#pragma once

#include <map>
#include <string>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/harness/model.hpp"

namespace dicos::harness {

struct EvalReport {
    std::size_t dialogues = 0;
    std::size_t turns = 0;
    bool no_turns = true;
    double joint_goal_accuracy = 0.0;
    double slot_accuracy = 0.0;
    std::map<std::string, double> domain_joint_accuracy;
    // Evidence turns of gold updates covered by the turns fed to the generator.
    std::size_t evidence_turns = 0;
    double selection_recall = 0.0;
    // Same, restricted to evidence turns before the current one.
    std::size_t history_evidence_turns = 0;
    double history_selection_recall = 0.0;
    // Gold updates whose value is not stated in their own turn.
    std::size_t coref_updates = 0;
    double coref_classification_accuracy = 0.0;
    double coref_value_accuracy = 0.0;
    double update_precision = 0.0;
    double update_recall = 0.0;
    double update_f1 = 0.0;
    std::size_t truncation_events = 0;

    /// Deterministic JSON text (fixed key order).
    std::string to_json() const;
};

/// Joint, slot and per-domain accuracy of predicted against gold states.
/// `predicted[i][t]` is the state predicted for dialogue i after turn t+1.
EvalReport score_states(const corpus::DialogueCorpus& corpus,
                        const std::vector<std::vector<corpus::DialogueState>>& predicted,
                        const corpus::SlotSchema& schema);

struct EvalOptions {
    SelectionMode mode = SelectionMode::dicos;
    std::size_t k = 2;
    selector::PerspectiveMask mask;
    /// Feed gold B_{T-1} instead of the model's own previous prediction.
    bool gold_replay = false;
};

struct DialoguePrediction {
    std::string dialogue_id;
    std::vector<TurnTrace> turns;
};

/// Tracked inference over the corpus plus selection and coreference
/// diagnostics computed for every gold update.
EvalReport evaluate(const Model& model, const corpus::DialogueCorpus& corpus, const EvalOptions& options,
                    std::vector<DialoguePrediction>* predictions = nullptr);

struct AblationRow {
    selector::PerspectiveMask mask;
    EvalReport report;
};

/// All seven non-empty perspective combinations, single perspectives first.
std::vector<AblationRow> ablate(const Model& model, const corpus::DialogueCorpus& corpus, std::size_t k);

}  // namespace dicos::harness
