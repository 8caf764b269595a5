#include "dicos/harness/model.hpp"

#include <algorithm>

#include "dicos/numerics/ops.hpp"

namespace dicos::harness {

SelectionMode parse_mode(const std::string& name) {
    if (name == "dicos") return SelectionMode::dicos;
    if (name == "granularity") return SelectionMode::granularity;
    throw corpus::ValidationError("unknown mode '" + name + "' (expected dicos or granularity)");
}

const char* mode_name(SelectionMode mode) {
    return mode == SelectionMode::dicos ? "dicos" : "granularity";
}

namespace {

const TrainConfig& validated(const TrainConfig& config) {
    config.validate();
    return config;
}

}  // namespace

Model::Model(const TrainConfig& config, corpus::SlotSchema schema, encoder::Vocabulary vocab)
    : config_(validated(config)),
      schema_(std::move(schema)),
      vocab_(std::move(vocab)),
      store_(config.seed),
      encoder_(store_, config_.encoder_config(), vocab_.size()),
      update_(store_, config_.d),
      selector_(store_, config_.selector_config()),
      generator_(store_, config_.generator_config(), encoder_, schema_, vocab_) {}

Model::SlotRun Model::run_slot(const corpus::Dialogue& dialogue, int T, const corpus::DialogueState& prev_state,
                               const encoder::EncodedTurnBatch& batch, std::size_t slot,
                               const std::vector<int>& latest, const InferenceOptions& options, bool train,
                               std::mt19937_64& rng, std::map<std::vector<std::size_t>, Tensor>& contexts) const {
    SlotRun run;
    run.trace.slot = slot;
    Tensor scores;
    if (T > 1 && options.k > 0) {
        selector::SlotSelection sel =
            selector_.select(batch, slot, schema_, latest, options.mask, selector::GateOverride::none, options.k);
        scores = sel.scores;
        run.trace.selected = sel.selected;
        run.trace.history_scores = sel.history_scores;
    }
    std::vector<int> fed = run.trace.selected;
    if (options.mode == SelectionMode::granularity && !fed.empty()) {
        const int first = fed.front();
        fed.clear();
        for (int t = first; t < T; ++t) fed.push_back(t);
    }
    run.ctx = generator::build_refined_context(dialogue, T, fed, prev_state, schema_, vocab_, config_.gen_max_len);
    run.trace.fed = run.ctx.turns;
    run.trace.dropped_turns = run.ctx.dropped_turns.size();

    Tensor context;
    auto it = contexts.find(run.ctx.ids);
    if (it != contexts.end()) {
        context = it->second;
    } else {
        context = generator_.encode(run.ctx, &batch, config_.dropout, config_.word_dropout, train, rng);
        contexts.emplace(run.ctx.ids, context);
    }

    // selected turns contribute log sigmoid(score) to their logits; the current turn 0
    Tensor bias;
    if (scores.defined() && run.ctx.turns.size() > 1) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i + 1 < run.ctx.turns.size(); ++i) {
            rows.push_back(static_cast<std::size_t>(run.ctx.turns[i] - 1));
        }
        bias = ops::concat_rows({ops::log_sigmoid(ops::gather_rows(scores, rows)), Tensor::zeros({1, 1})});
    }
    run.outputs = generator_.heads(context, run.ctx, slot, bias);
    if (!train) run.trace.prediction = generator_.decode(run.outputs, run.ctx, slot);
    return run;
}

TurnLoss Model::turn_loss(const corpus::Dialogue& dialogue, int T, std::mt19937_64& rng) const {
    if (T < 1 || static_cast<std::size_t>(T) > dialogue.size()) throw std::out_of_range("turn_loss: bad turn");
    const std::size_t J = schema_.size();
    const corpus::DialogueState prev = dialogue.state_before(T, schema_);
    const corpus::DialogueState& gold = dialogue.gold_states[static_cast<std::size_t>(T - 1)];
    std::set<std::size_t> labels;
    for (std::size_t j = 0; j < J; ++j) {
        if (gold.values[j] != prev.values[j]) labels.insert(j);
    }
    std::vector<corpus::DialogueState> history(dialogue.gold_states.begin(),
                                               dialogue.gold_states.begin() + (T - 1));
    const std::vector<int> latest = selector::latest_update_turns(history, J);
    const bool current_only = labels.empty() || T == 1 || config_.k == 0;
    encoder::EncodedTurnBatch batch =
        encoder::encode_turns(encoder_, dialogue, T, prev, schema_, vocab_, true, rng, current_only);

    TurnLoss loss;
    Tensor update = update::update_loss(update_.logits(batch.current()), labels);
    loss.update = update.item();
    loss.total = update;
    if (labels.empty()) return loss;

    InferenceOptions options;
    options.k = config_.k;
    std::map<std::vector<std::size_t>, Tensor> contexts;
    Tensor ext;
    Tensor cls;
    for (auto j : labels) {
        SlotRun run = run_slot(dialogue, T, prev, batch, j, latest, options, true, rng, contexts);
        generator::GoldTargets targets = generator::gold_targets(run.ctx, j, gold.values[j], schema_, vocab_);
        Tensor e = generator::extractive_loss(run.outputs, targets);
        Tensor c = generator::classification_loss(run.outputs, targets);
        ext = ext.defined() ? ops::add(ext, e) : e;
        cls = cls.defined() ? ops::add(cls, c) : c;
    }
    const double inv = 1.0 / static_cast<double>(labels.size());
    ext = ops::scale(ext, inv);
    cls = ops::scale(cls, inv);
    loss.extractive = ext.item();
    loss.classification = cls.item();
    loss.total = ops::add(loss.total, ops::add(ext, cls));
    return loss;
}

TurnTrace Model::predict_turn(const corpus::Dialogue& dialogue, int T, const corpus::DialogueState& prev_state,
                              const std::vector<corpus::DialogueState>& history, const InferenceOptions& options,
                              const std::set<std::size_t>& diagnostic_slots, encoder::EncodingCache* cache) const {
    NoGradGuard no_grad;
    std::mt19937_64 rng(0);  // unused outside training
    encoder::EncodingCache local;
    if (!cache) cache = &local;
    TurnTrace trace;
    trace.turn = T;
    trace.state = prev_state;
    const std::vector<int> latest = selector::latest_update_turns(history, schema_.size());
    encoder::EncodedTurnBatch current =
        encoder::encode_turns(encoder_, dialogue, T, prev_state, schema_, vocab_, false, rng, true, cache);
    trace.decision = update_.predict(current.current(), config_.update_threshold);
    if (trace.decision.selected.empty() && diagnostic_slots.empty()) return trace;

    const bool need_history = T > 1 && options.k > 0;
    encoder::EncodedTurnBatch batch =
        need_history ? encoder::encode_turns(encoder_, dialogue, T, prev_state, schema_, vocab_, false, rng, false, cache)
                     : current;
    std::map<std::vector<std::size_t>, Tensor> contexts;
    for (auto j : trace.decision.selected) {
        SlotRun run = run_slot(dialogue, T, prev_state, batch, j, latest, options, false, rng, contexts);
        trace.state.values[j] = run.trace.prediction.value;
        trace.updates.push_back(std::move(run.trace));
    }
    for (auto j : diagnostic_slots) {
        auto done = std::find_if(trace.updates.begin(), trace.updates.end(),
                                 [j](const SlotTrace& s) { return s.slot == j; });
        if (done != trace.updates.end()) {
            trace.diagnostics.push_back(*done);
        } else {
            trace.diagnostics.push_back(
                run_slot(dialogue, T, prev_state, batch, j, latest, options, false, rng, contexts).trace);
        }
    }
    return trace;
}

}  // namespace dicos::harness
