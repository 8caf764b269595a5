#include "dicos/generator/generator.hpp"

#include <algorithm>
#include <cmath>

#include "dicos/numerics/ops.hpp"

namespace dicos::generator {

using encoder::kBoundary;
using encoder::kCls;
using encoder::kIndicator;
using encoder::kSep;

RefinedContext build_refined_context(const corpus::Dialogue& dialogue, int T, const std::vector<int>& selected,
                                     const corpus::DialogueState& prev_state, const corpus::SlotSchema& schema,
                                     const encoder::Vocabulary& vocab, std::size_t max_len) {
    if (T < 1 || static_cast<std::size_t>(T) > dialogue.size()) {
        throw std::out_of_range("build_refined_context: turn " + std::to_string(T) + " outside the dialogue");
    }
    std::vector<int> history = selected;
    std::sort(history.begin(), history.end());
    history.erase(std::unique(history.begin(), history.end()), history.end());
    for (int t : history) {
        if (t < 1 || t >= T) throw std::invalid_argument("build_refined_context: " + std::to_string(t) +
                                                         " is not a history turn of " + std::to_string(T));
    }
    encoder::StateBlock block = encoder::build_state_block(prev_state, schema, vocab);
    auto turn_ids = [&](int t) { return encoder::dialogue_ids(dialogue.turns[static_cast<std::size_t>(t - 1)], vocab); };

    RefinedContext ctx;
    std::vector<std::vector<std::size_t>> parts;
    std::size_t total = 1 + block.ids.size();
    for (int t : history) {
        parts.push_back(turn_ids(t));
        total += 1 + parts.back().size();
    }
    std::vector<std::size_t> current = turn_ids(T);
    total += 1 + current.size();
    std::size_t drop = 0;
    while (total > max_len && drop < history.size()) {
        total -= 1 + parts[drop].size();
        ctx.dropped_turns.push_back(history[drop]);
        ++drop;
    }
    if (total > max_len) {
        const std::size_t fixed = 1 + block.ids.size() + 1;
        if (fixed + 1 > max_len) {
            throw encoder::ConfigError("build_refined_context: state block needs " + std::to_string(fixed + 1) +
                                       " tokens, max_len is " + std::to_string(max_len));
        }
        ctx.truncated = total - max_len;
        current.erase(current.begin(), current.begin() + static_cast<std::ptrdiff_t>(ctx.truncated));
    }

    ctx.ids.push_back(kCls);
    for (std::size_t j = 0; j < schema.size(); ++j) {
        ctx.slot_pos.push_back(block.slot_pos[j] + 1);
        ctx.value_pos.push_back(block.value_pos[j] + 1);
    }
    ctx.ids.insert(ctx.ids.end(), block.ids.begin(), block.ids.end());
    auto append_turn = [&](int t, const std::vector<std::size_t>& d) {
        ctx.indicator_pos.push_back(ctx.ids.size());
        ctx.ids.push_back(kIndicator);
        for (auto id : d) {
            ctx.dialogue_pos.push_back(ctx.ids.size());
            ctx.dialogue_turn.push_back(ctx.turns.size());
            ctx.ids.push_back(id);
        }
        ctx.turns.push_back(t);
    };
    for (std::size_t i = drop; i < history.size(); ++i) append_turn(history[i], parts[i]);
    append_turn(T, current);
    return ctx;
}

std::optional<std::string> span_text(const RefinedContext& ctx, const encoder::Vocabulary& vocab, std::size_t start,
                                     std::size_t end) {
    if (end < start || end >= ctx.dialogue_pos.size()) return std::nullopt;
    std::string out;
    for (std::size_t i = start; i <= end; ++i) {
        if (i > start) out += ' ';
        out += vocab.token(ctx.ids[ctx.dialogue_pos[i]]);
    }
    return out;
}

const char* method_name(Method m) {
    return m == Method::extractive ? "extractive" : "classification";
}

GoldTargets gold_targets(const RefinedContext& ctx, std::size_t slot, const std::string& value,
                         const corpus::SlotSchema& schema, const encoder::Vocabulary& vocab) {
    GoldTargets gold;
    gold.candidate = schema[slot].candidate_index(value);
    const std::vector<std::size_t> needle = vocab.ids(corpus::tokenize(value));
    const std::size_t n = ctx.dialogue_pos.size();
    for (std::size_t ti = ctx.turns.size(); ti-- > 0 && !gold.extractable && !needle.empty();) {
        for (std::size_t s = 0; s + needle.size() <= n; ++s) {
            if (ctx.dialogue_turn[s] != ti || ctx.dialogue_turn[s + needle.size() - 1] != ti) continue;
            bool match = true;
            for (std::size_t k = 0; k < needle.size() && match; ++k) {
                const std::size_t id = ctx.ids[ctx.dialogue_pos[s + k]];
                match = id == needle[k] && id != encoder::kUnk;
            }
            if (match) {
                gold.extractable = true;
                gold.start = s;
                gold.end = s + needle.size() - 1;
                break;
            }
        }
    }
    if (!gold.extractable && !gold.candidate) {
        throw corpus::ValidationError("slot " + schema[slot].name + ": value '" + value +
                                      "' is neither in the context nor a candidate");
    }
    return gold;
}

Generator::Generator(ParameterStore& store, const GeneratorConfig& config, const encoder::Encoder& shared,
                     const corpus::SlotSchema& schema, const encoder::Vocabulary& vocab)
    : config_(config), shared_(&shared), schema_(&schema), vocab_(&vocab) {
    const std::size_t d = config.d;
    if (d != shared.config().d) throw encoder::ConfigError("generator: width differs from the shared embeddings");
    if (config.heads == 0 || d % config.heads != 0) throw encoder::ConfigError("generator: d must divide into heads");
    stack_ = encoder::TransformerStack(store, "generator", d, config.layers, config.heads, config.d_ff);
    start_w_ = store.add("generator.start", {d, d});
    end_w_ = store.add("generator.end", {d, d});
    indicator_w_ = store.add("generator.indicator", {d, d});
    pointer_w_ = store.add("generator.pointer", {d, d});
    value_proj_ = Linear::create(store, "generator.value", 3 * d, d);
    for (const auto& slot : schema.slots()) {
        std::vector<std::size_t> ids;
        std::vector<std::vector<std::size_t>> per;
        for (const auto& c : slot.candidates) per.push_back(vocab.ids(corpus::tokenize(c)));
        for (const auto& p : per) ids.insert(ids.end(), p.begin(), p.end());
        std::vector<double> pool(per.size() * ids.size(), 0.0);
        std::size_t offset = 0;
        for (std::size_t c = 0; c < per.size(); ++c) {
            for (std::size_t k = 0; k < per[c].size(); ++k) {
                pool[c * ids.size() + offset + k] = 1.0 / static_cast<double>(per[c].size());
            }
            offset += per[c].size();
        }
        candidate_pool_.emplace_back(Shape{per.size(), ids.size()}, std::move(pool));
        candidate_ids_.push_back(std::move(ids));
    }
}

Tensor Generator::candidate_embeddings(std::size_t slot) const {
    return ops::matmul(candidate_pool_.at(slot), shared_->token_embeddings(candidate_ids_.at(slot)));
}

Tensor Generator::encode(const RefinedContext& ctx, const encoder::EncodedTurnBatch* batch, double dropout,
                         double word_dropout, bool train, std::mt19937_64& rng) const {
    if (config_.refine) {
        std::vector<std::size_t> ids = ctx.ids;
        if (train) {
            std::vector<bool> droppable(ids.size(), false);
            for (auto pos : ctx.dialogue_pos) droppable[pos] = ids[pos] != kBoundary && ids[pos] != kSep;
            ids = encoder::word_dropout(std::move(ids), droppable, word_dropout, rng);
        }
        return stack_(shared_->embed(ids), dropout, train, rng);
    }
    if (!batch) throw std::invalid_argument("generator: first-pass encodings required without refinement");
    const auto& cur = batch->current();
    // [CLS] and the state block of E_T, without its [SEP]
    std::vector<Tensor> rows{ops::slice_rows(cur.hidden, 0, cur.layout.d_begin - 1)};
    for (std::size_t i = 0; i < ctx.turns.size(); ++i) {
        const auto& et = batch->turn(ctx.turns[i]);
        const std::size_t expect = static_cast<std::size_t>(
            std::count(ctx.dialogue_turn.begin(), ctx.dialogue_turn.end(), i));
        if (et.layout.d_end - et.layout.d_begin != expect) {
            throw encoder::ConfigError("generator: first-pass turn " + std::to_string(ctx.turns[i]) +
                                       " was truncated; refinement is required");
        }
        rows.push_back(ops::row(et.hidden, et.layout.cls));
        rows.push_back(ops::slice_rows(et.hidden, et.layout.d_begin, et.layout.d_end));
    }
    return ops::concat_rows(rows);
}

SlotOutputs Generator::heads(const Tensor& context, const RefinedContext& ctx, std::size_t slot,
                             const Tensor& turn_bias) const {
    Tensor slot_vec = ops::row(context, ctx.slot_pos.at(slot));
    Tensor dialogue = ops::gather_rows(context, ctx.dialogue_pos);
    Tensor indicators = ops::gather_rows(context, ctx.indicator_pos);
    SlotOutputs out;
    out.start_logits = ops::matmul_nt(ops::matmul(slot_vec, start_w_), dialogue);
    out.end_logits = ops::matmul_nt(ops::matmul(slot_vec, end_w_), dialogue);
    out.indicator_logits = ops::matmul_nt(ops::matmul(slot_vec, indicator_w_), indicators);
    const std::size_t n = ctx.dialogue_pos.size();
    const std::size_t m = ctx.turns.size();
    std::vector<double> onehot(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) onehot[i * m + ctx.dialogue_turn[i]] = 1.0;
    const Tensor owner({n, m}, std::move(onehot));
    if (turn_bias.defined()) {
        if (turn_bias.numel() != m) throw DimensionError("generator: one turn bias per included turn");
        Tensor bias = ops::reshape(turn_bias, {m, 1});
        Tensor position_bias = ops::transpose(ops::matmul(owner, bias));
        out.start_logits = ops::add(out.start_logits, position_bias);
        out.end_logits = ops::add(out.end_logits, position_bias);
        out.indicator_logits = ops::add(out.indicator_logits, ops::transpose(bias));
    }
    Tensor summary = ops::matmul(ops::softmax(out.indicator_logits, 1), indicators);
    // token pointer: weights of each turn's positions scaled by that turn's y
    Tensor log_y = ops::log_softmax(out.indicator_logits, 1);
    Tensor pointer_logits = ops::add(ops::matmul_nt(ops::matmul(slot_vec, pointer_w_), dialogue),
                                     ops::matmul_nt(log_y, owner));
    Tensor read = ops::matmul(ops::softmax(pointer_logits, 1), dialogue);
    Tensor query = value_proj_(ops::concat_cols({summary, slot_vec, read}));
    out.candidate_logits = ops::matmul_nt(query, candidate_embeddings(slot));
    return out;
}

namespace {

std::vector<double> probabilities(const Tensor& logits) {
    NoGradGuard guard;
    Tensor p = ops::softmax(logits, 1);
    return {p.data().begin(), p.data().end()};
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ValuePrediction Generator::decode(const SlotOutputs& out, const RefinedContext& ctx, std::size_t slot) const {
    ValuePrediction pred;
    pred.slot = slot;
    pred.start_probs = probabilities(out.start_logits);
    pred.end_probs = probabilities(out.end_logits);
    pred.indicator_probs = probabilities(out.indicator_logits);
    pred.candidate_probs = probabilities(out.candidate_logits);
    pred.start = argmax(pred.start_probs);
    pred.end = argmax(pred.end_probs);
    pred.span = span_text(ctx, *vocab_, pred.start, pred.end);
    pred.classified = (*schema_)[slot].candidates[argmax(pred.candidate_probs)];
    if (pred.span && (*schema_)[slot].has_candidate(*pred.span)) {
        pred.method = Method::extractive;
        pred.value = *pred.span;
    } else {
        pred.method = Method::classification;
        pred.value = pred.classified;
    }
    return pred;
}

Tensor extractive_loss(const SlotOutputs& out, const GoldTargets& gold) {
    if (!gold.extractable) return Tensor::scalar(0.0);
    Tensor ls = ops::element(ops::log_softmax(out.start_logits, 1), gold.start);
    Tensor le = ops::element(ops::log_softmax(out.end_logits, 1), gold.end);
    return ops::scale(ops::add(ls, le), -1.0);
}

Tensor classification_loss(const SlotOutputs& out, const GoldTargets& gold) {
    if (!gold.candidate) return Tensor::scalar(0.0);
    return ops::scale(ops::element(ops::log_softmax(out.candidate_logits, 1), *gold.candidate), -1.0);
}

}  // namespace dicos::generator
