#include "dicos/encoder/encoder.hpp"

#include <cmath>

#include "dicos/numerics/ops.hpp"

namespace dicos::encoder {

void EncoderConfig::validate() const {
    if (d == 0 || n_heads == 0 || d % n_heads != 0) {
        throw ConfigError("encoder: d=" + std::to_string(d) + " must be a positive multiple of n_heads=" +
                          std::to_string(n_heads));
    }
    if (d_ff == 0) throw ConfigError("encoder: d_ff must be positive");
    if (max_len < 4) throw ConfigError("encoder: max_len too small");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must lie in [0, 1)");
    if (word_dropout < 0.0 || word_dropout >= 1.0) throw ConfigError("encoder: word_dropout must lie in [0, 1)");
}

StateBlock build_state_block(const corpus::DialogueState& state, const corpus::SlotSchema& schema,
                             const Vocabulary& vocab) {
    if (state.values.size() != schema.size()) {
        throw ConfigError("state block: state covers " + std::to_string(state.values.size()) + " slots, schema has " +
                          std::to_string(schema.size()));
    }
    StateBlock block;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        block.slot_pos.push_back(block.ids.size());
        block.ids.push_back(kSlot);
        for (auto id : vocab.ids(corpus::tokenize(schema[j].name))) block.ids.push_back(id);
        block.value_pos.push_back(block.ids.size());
        block.ids.push_back(kValue);
        for (auto id : vocab.ids(corpus::tokenize(state.values[j]))) block.ids.push_back(id);
    }
    return block;
}

std::vector<std::size_t> dialogue_ids(const corpus::Turn& turn, const Vocabulary& vocab) {
    std::vector<std::size_t> ids = vocab.ids(corpus::tokenize(turn.system));
    ids.push_back(kBoundary);
    for (auto id : vocab.ids(corpus::tokenize(turn.user))) ids.push_back(id);
    ids.push_back(kSep);
    return ids;
}

TurnLayout assemble_input(const corpus::Dialogue& dialogue, int t, const corpus::DialogueState& prev_state,
                          const corpus::SlotSchema& schema, const Vocabulary& vocab, std::size_t max_len) {
    if (t < 1 || static_cast<std::size_t>(t) > dialogue.size()) {
        throw std::out_of_range("assemble_input: turn " + std::to_string(t) + " outside 1.." +
                                std::to_string(dialogue.size()));
    }
    StateBlock block = build_state_block(prev_state, schema, vocab);
    std::vector<std::size_t> d = dialogue_ids(dialogue.turns[static_cast<std::size_t>(t - 1)], vocab);
    const std::size_t fixed = block.ids.size() + 2;  // [CLS] and [SEP]
    if (fixed + 1 > max_len) {
        throw ConfigError("assemble_input: state block needs " + std::to_string(fixed + 1) +
                          " tokens, max_len is " + std::to_string(max_len));
    }
    TurnLayout layout;
    if (fixed + d.size() > max_len) {
        layout.truncated = fixed + d.size() - max_len;
        d.erase(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(layout.truncated));
    }
    layout.ids.reserve(fixed + d.size());
    layout.ids.push_back(kCls);
    for (std::size_t j = 0; j < schema.size(); ++j) {
        layout.slot_pos.push_back(block.slot_pos[j] + 1);
        layout.value_pos.push_back(block.value_pos[j] + 1);
    }
    layout.ids.insert(layout.ids.end(), block.ids.begin(), block.ids.end());
    layout.ids.push_back(kSep);
    layout.d_begin = layout.ids.size();
    layout.ids.insert(layout.ids.end(), d.begin(), d.end());
    layout.d_end = layout.ids.size();
    return layout;
}

std::vector<std::size_t> word_dropout(std::vector<std::size_t> ids, const std::vector<bool>& droppable, double rate,
                                      std::mt19937_64& rng) {
    if (rate <= 0.0) return ids;
    std::bernoulli_distribution drop(rate);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (droppable[i] && drop(rng)) ids[i] = kUnk;
    }
    return ids;
}

Tensor sinusoid_positions(std::size_t len, std::size_t d) {
    std::vector<double> table(len * d);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) * rate;
            table[pos * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor({len, d}, std::move(table));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d,
                                       std::size_t heads)
    : qkv_(Linear::create(store, name + ".qkv", d, 3 * d)),
      out_(Linear::create(store, name + ".out", d, d)),
      heads_(heads) {
    if (heads == 0 || d % heads != 0) throw ConfigError(name + ": d must be a multiple of the head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& x) const {
    const std::size_t d = out_.in_features();
    const std::size_t dh = d / heads_;
    Tensor qkv = qkv_(x);
    std::vector<Tensor> heads;
    heads.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
        Tensor q = ops::slice_cols(qkv, h * dh, (h + 1) * dh);
        Tensor k = ops::slice_cols(qkv, d + h * dh, d + (h + 1) * dh);
        Tensor v = ops::slice_cols(qkv, 2 * d + h * dh, 2 * d + (h + 1) * dh);
        heads.push_back(ops::scaled_dot_attention(q, k, v));
    }
    return out_(heads_ == 1 ? heads[0] : ops::concat_cols(heads));
}

TransformerStack::TransformerStack(ParameterStore& store, const std::string& name, std::size_t d,
                                   std::size_t layers, std::size_t heads, std::size_t d_ff) {
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = name + ".layer" + std::to_string(l);
        Block b;
        b.ln1_g = store.add(p + ".ln1.gain", {d}, Init::ones);
        b.ln1_b = store.add(p + ".ln1.bias", {d}, Init::zeros);
        b.attention = MultiHeadAttention(store, p + ".attn", d, heads);
        b.ln2_g = store.add(p + ".ln2.gain", {d}, Init::ones);
        b.ln2_b = store.add(p + ".ln2.bias", {d}, Init::zeros);
        b.ff1 = Linear::create(store, p + ".ff1", d, d_ff);
        b.ff2 = Linear::create(store, p + ".ff2", d_ff, d);
        blocks_.push_back(std::move(b));
    }
    if (layers > 0) {
        final_g_ = store.add(name + ".final_ln.gain", {d}, Init::ones);
        final_b_ = store.add(name + ".final_ln.bias", {d}, Init::zeros);
    }
}

Tensor TransformerStack::operator()(Tensor x, double dropout, bool train, std::mt19937_64& rng) const {
    for (const auto& b : blocks_) {
        Tensor a = b.attention(ops::layer_norm(x, b.ln1_g, b.ln1_b));
        x = ops::add(x, ops::dropout(a, dropout, rng, train));
        Tensor f = b.ff2(ops::relu(b.ff1(ops::layer_norm(x, b.ln2_g, b.ln2_b))));
        x = ops::add(x, ops::dropout(f, dropout, rng, train));
    }
    if (blocks_.empty()) return x;
    return ops::layer_norm(x, final_g_, final_b_);
}

Encoder::Encoder(ParameterStore& store, const EncoderConfig& config, std::size_t vocab_size)
    : config_(config), vocab_size_(vocab_size) {
    config_.validate();
    table_ = store.add("embedding.table", {vocab_size, config_.d});
    stack_ = TransformerStack(store, "encoder", config_.d, config_.n_layers, config_.n_heads, config_.d_ff);
}

Tensor Encoder::token_embeddings(const std::vector<std::size_t>& ids) const {
    return ops::scale(ops::gather_rows(table_, ids), std::sqrt(static_cast<double>(config_.d)));
}

Tensor Encoder::embed(const std::vector<std::size_t>& ids) const {
    return ops::add(token_embeddings(ids), sinusoid_positions(ids.size(), config_.d));
}

Tensor Encoder::encode(const std::vector<std::size_t>& ids, bool train, std::mt19937_64& rng) const {
    return stack_(embed(ids), config_.dropout, train, rng);
}

EncodedTurnBatch encode_turns(const Encoder& encoder, const corpus::Dialogue& dialogue, int T,
                              const corpus::DialogueState& prev_state, const corpus::SlotSchema& schema,
                              const Vocabulary& vocab, bool train, std::mt19937_64& rng, bool current_only,
                              EncodingCache* cache) {
    if (T < 1) throw std::out_of_range("encode_turns: T must be at least 1");
    EncodedTurnBatch batch;
    for (int t = current_only ? T : 1; t <= T; ++t) {
        EncodedTurn et;
        et.turn = t;
        et.layout = assemble_input(dialogue, t, prev_state, schema, vocab, encoder.config().max_len);
        std::vector<std::size_t> ids = et.layout.ids;
        if (train) {
            std::vector<bool> droppable(ids.size(), false);
            for (std::size_t i = et.layout.d_begin; i < et.layout.d_end; ++i) {
                droppable[i] = ids[i] != kBoundary && ids[i] != kSep;
            }
            ids = word_dropout(std::move(ids), droppable, encoder.config().word_dropout, rng);
        }
        if (cache) {
            auto it = cache->find(ids);
            if (it != cache->end()) {
                et.hidden = it->second;
            } else {
                et.hidden = encoder.encode(ids, train, rng);
                cache->emplace(ids, et.hidden);
            }
        } else {
            et.hidden = encoder.encode(ids, train, rng);
        }
        batch.turns.push_back(std::move(et));
    }
    return batch;
}

}  // namespace dicos::encoder
