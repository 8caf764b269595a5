#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/encoder/vocab.hpp"
#include "dicos/numerics/params.hpp"

namespace dicos::encoder {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
    std::size_t d = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_len = 128;
    double dropout = 0.1;
    double word_dropout = 0.1;

    void validate() const;
};

/// [SLOT] name [VALUE] value, per slot in schema order. Positions are
/// relative to the start of the block.
struct StateBlock {
    std::vector<std::size_t> ids;
    std::vector<std::size_t> slot_pos;
    std::vector<std::size_t> value_pos;
};

StateBlock build_state_block(const corpus::DialogueState& state, const corpus::SlotSchema& schema,
                             const Vocabulary& vocab);

/// R_t ; U_t [SEP]
std::vector<std::size_t> dialogue_ids(const corpus::Turn& turn, const Vocabulary& vocab);

/// Token ids of E_t with the positions every head needs.
struct TurnLayout {
    std::vector<std::size_t> ids;
    std::size_t cls = 0;
    std::vector<std::size_t> slot_pos;
    std::vector<std::size_t> value_pos;
    std::size_t d_begin = 0;  // D_t span [d_begin, d_end)
    std::size_t d_end = 0;
    std::size_t truncated = 0;  // D_t tokens dropped from the left
};

/// E_t = [CLS] B [SEP] D_t. Overlong inputs lose the oldest D_t tokens; a
/// state block that does not fit on its own is a ConfigError.
TurnLayout assemble_input(const corpus::Dialogue& dialogue, int t, const corpus::DialogueState& prev_state,
                          const corpus::SlotSchema& schema, const Vocabulary& vocab, std::size_t max_len);

/// Replaces each flagged position with [UNK] with probability `rate`.
std::vector<std::size_t> word_dropout(std::vector<std::size_t> ids, const std::vector<bool>& droppable, double rate,
                                      std::mt19937_64& rng);

/// Fixed sinusoidal position table [len x d].
Tensor sinusoid_positions(std::size_t len, std::size_t d);

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads);

    /// Self-attention over the rows of x, followed by the output projection.
    Tensor operator()(const Tensor& x) const;

    const Linear& qkv() const { return qkv_; }
    const Linear& out() const { return out_; }

private:
    Linear qkv_;
    Linear out_;
    std::size_t heads_ = 1;
};

/// Pre-LN transformer blocks with a final layer norm (absent when empty).
class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(ParameterStore& store, const std::string& name, std::size_t d, std::size_t layers,
                     std::size_t heads, std::size_t d_ff);

    Tensor operator()(Tensor x, double dropout, bool train, std::mt19937_64& rng) const;
    std::size_t layers() const { return blocks_.size(); }

private:
    struct Block {
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        MultiHeadAttention attention;
        Linear ff1, ff2;
    };
    std::vector<Block> blocks_;
    Tensor final_g_, final_b_;
};

/// Shared token embeddings plus the first-pass transformer.
class Encoder {
public:
    Encoder(ParameterStore& store, const EncoderConfig& config, std::size_t vocab_size);

    const EncoderConfig& config() const { return config_; }
    std::size_t vocab_size() const { return vocab_size_; }

    /// Scaled embedding rows, no positions.
    Tensor token_embeddings(const std::vector<std::size_t>& ids) const;
    /// Token embeddings plus sinusoidal positions.
    Tensor embed(const std::vector<std::size_t>& ids) const;
    Tensor encode(const std::vector<std::size_t>& ids, bool train, std::mt19937_64& rng) const;

private:
    EncoderConfig config_;
    std::size_t vocab_size_;
    Tensor table_;
    TransformerStack stack_;
};

struct EncodedTurn {
    int turn = 0;
    TurnLayout layout;
    Tensor hidden;  // [len x d]
};

/// Consecutive turns ending at T, each encoded on its own with B_{T-1} prepended.
struct EncodedTurnBatch {
    std::vector<EncodedTurn> turns;

    std::size_t size() const { return turns.size(); }
    int first_turn() const { return turns.front().turn; }
    const EncodedTurn& turn(int t) const { return turns.at(static_cast<std::size_t>(t - first_turn())); }
    const EncodedTurn& current() const { return turns.back(); }
};

/// Memo of encodings keyed by token ids; only valid within one tape.
using EncodingCache = std::map<std::vector<std::size_t>, Tensor>;

/// Encodes turns 1..T, or only T when `current_only`. Word dropout applies in
/// train mode to D_t tokens other than ';' and [SEP].
EncodedTurnBatch encode_turns(const Encoder& encoder, const corpus::Dialogue& dialogue, int T,
                              const corpus::DialogueState& prev_state, const corpus::SlotSchema& schema,
                              const Vocabulary& vocab, bool train, std::mt19937_64& rng,
                              bool current_only = false, EncodingCache* cache = nullptr);

}  // namespace dicos::encoder
