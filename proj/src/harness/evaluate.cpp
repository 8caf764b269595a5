#include "dicos/harness/evaluate.hpp"

#include "json.hpp"

namespace dicos::harness {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["dialogues"] = dialogues;
    j["turns"] = turns;
    j["no_turns"] = no_turns;
    j["joint_goal_accuracy"] = joint_goal_accuracy;
    j["slot_accuracy"] = slot_accuracy;
    j["domain_joint_accuracy"] = nlohmann::ordered_json::object();
    for (const auto& [domain, acc] : domain_joint_accuracy) j["domain_joint_accuracy"][domain] = acc;
    j["evidence_turns"] = evidence_turns;
    j["selection_recall"] = selection_recall;
    j["history_evidence_turns"] = history_evidence_turns;
    j["history_selection_recall"] = history_selection_recall;
    j["coref_updates"] = coref_updates;
    j["coref_classification_accuracy"] = coref_classification_accuracy;
    j["coref_value_accuracy"] = coref_value_accuracy;
    j["update_precision"] = update_precision;
    j["update_recall"] = update_recall;
    j["update_f1"] = update_f1;
    j["truncation_events"] = truncation_events;
    return j.dump(2);
}

EvalReport score_states(const corpus::DialogueCorpus& corpus,
                        const std::vector<std::vector<corpus::DialogueState>>& predicted,
                        const corpus::SlotSchema& schema) {
    if (predicted.size() != corpus.dialogues.size()) throw std::invalid_argument("score_states: dialogue count");
    EvalReport r;
    r.dialogues = corpus.dialogues.size();
    std::size_t joint = 0;
    std::size_t slots = 0;
    std::map<std::string, std::size_t> domain_hits;
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
        const auto& d = corpus.dialogues[i];
        if (predicted[i].size() != d.size()) throw std::invalid_argument("score_states: turn count of " + d.dialogue_id);
        for (std::size_t t = 0; t < d.size(); ++t) {
            const auto& gold = d.gold_states[t].values;
            const auto& pred = predicted[i][t].values;
            if (pred.size() != schema.size()) throw std::invalid_argument("score_states: state is not total");
            std::map<std::string, bool> domain_ok;
            for (const auto& dom : schema.domains()) domain_ok[dom] = true;
            bool all = true;
            for (std::size_t j = 0; j < schema.size(); ++j) {
                const bool ok = gold[j] == pred[j];
                slots += ok;
                all = all && ok;
                if (!ok) domain_ok[schema[j].domain] = false;
            }
            joint += all;
            for (const auto& [dom, ok] : domain_ok) domain_hits[dom] += ok;
            ++r.turns;
        }
    }
    r.no_turns = r.turns == 0;
    r.joint_goal_accuracy = ratio(joint, r.turns);
    r.slot_accuracy = ratio(slots, r.turns * schema.size());
    for (const auto& dom : schema.domains()) r.domain_joint_accuracy[dom] = ratio(domain_hits[dom], r.turns);
    return r;
}

EvalReport evaluate(const Model& model, const corpus::DialogueCorpus& corpus, const EvalOptions& options,
                    std::vector<DialoguePrediction>* predictions) {
    const auto& schema = model.schema();
    InferenceOptions inf;
    inf.mode = options.mode;
    inf.k = options.k;
    inf.mask = options.mask;

    std::vector<std::vector<corpus::DialogueState>> predicted;
    std::size_t ev_hit = 0, ev_total = 0, hist_hit = 0, hist_total = 0;
    std::size_t coref = 0, coref_cls = 0, coref_val = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t truncations = 0;
    for (const auto& d : corpus.dialogues) {
        DialoguePrediction dp;
        dp.dialogue_id = d.dialogue_id;
        std::vector<corpus::DialogueState> states;
        corpus::DialogueState prev = corpus::DialogueState::empty(schema);
        encoder::EncodingCache cache;
        const corpus::UpdateLabels labels = corpus::derive_update_labels(d);
        for (int T = 1; T <= static_cast<int>(d.size()); ++T) {
            const std::size_t ti = static_cast<std::size_t>(T - 1);
            if (options.gold_replay) prev = d.state_before(T, schema);
            std::vector<corpus::DialogueState> history = options.gold_replay
                ? std::vector<corpus::DialogueState>(d.gold_states.begin(), d.gold_states.begin() + (T - 1))
                : states;
            TurnTrace trace = model.predict_turn(d, T, prev, history, inf, labels[ti], &cache);
            for (std::size_t j = 0; j < schema.size(); ++j) {
                const bool gold_up = labels[ti].count(j) != 0;
                const bool pred_up = trace.decision.selected.count(j) != 0;
                tp += gold_up && pred_up;
                fp += !gold_up && pred_up;
                fn += gold_up && !pred_up;
            }
            for (const auto& u : trace.updates) truncations += u.dropped_turns;
            for (const auto& diag : trace.diagnostics) {
                const std::string& gold_value = d.gold_states[ti].values[diag.slot];
                for (int e : corpus::evidence_turns(d, T, diag.slot)) {
                    const bool fed = std::find(diag.fed.begin(), diag.fed.end(), e) != diag.fed.end();
                    ++ev_total;
                    ev_hit += fed;
                    if (e < T) {
                        ++hist_total;
                        hist_hit += fed;
                    }
                }
                if (!corpus::value_in_turn(d.turns[ti], gold_value)) {
                    ++coref;
                    coref_cls += diag.prediction.classified == gold_value;
                    coref_val += diag.prediction.value == gold_value;
                }
            }
            prev = trace.state;
            states.push_back(trace.state);
            if (predictions) dp.turns.push_back(std::move(trace));
        }
        predicted.push_back(std::move(states));
        if (predictions) predictions->push_back(std::move(dp));
    }
    EvalReport r = score_states(corpus, predicted, schema);
    r.evidence_turns = ev_total;
    r.selection_recall = ratio(ev_hit, ev_total);
    r.history_evidence_turns = hist_total;
    r.history_selection_recall = ratio(hist_hit, hist_total);
    r.coref_updates = coref;
    r.coref_classification_accuracy = ratio(coref_cls, coref);
    r.coref_value_accuracy = ratio(coref_val, coref);
    r.update_precision = ratio(tp, tp + fp);
    r.update_recall = ratio(tp, tp + fn);
    r.update_f1 = ratio(2 * tp, 2 * tp + fp + fn);
    r.truncation_events = truncations;
    return r;
}

std::vector<AblationRow> ablate(const Model& model, const corpus::DialogueCorpus& corpus, std::size_t k) {
    std::vector<AblationRow> rows;
    for (unsigned bits : {1U, 2U, 4U, 3U, 5U, 6U, 7U}) {
        EvalOptions options;
        options.k = k;
        options.mask = selector::PerspectiveMask::from_bits(bits);
        rows.push_back({options.mask, evaluate(model, corpus, options)});
    }
    return rows;
}

}  // namespace dicos::harness
