#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/encoder/encoder.hpp"
#include "dicos/numerics/params.hpp"

namespace dicos::generator {

struct GeneratorConfig {
    std::size_t d = 64;
    std::size_t layers = 1;
    std::size_t heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_len = 256;
    /// false scores directly on first-pass turn encodings
    bool refine = true;
};

/// C = [CLS] B_{T-1} <t> D_(1) ... <t> D_T with every position the heads read.
struct RefinedContext {
    std::vector<std::size_t> ids;
    std::vector<int> turns;                  // included turns, ascending, last is T
    std::vector<std::size_t> indicator_pos;  // one per included turn
    std::vector<std::size_t> slot_pos;
    std::vector<std::size_t> value_pos;
    std::vector<std::size_t> dialogue_pos;   // C_E, in sequence order
    std::vector<std::size_t> dialogue_turn;  // per C_E entry, index into `turns`
    std::vector<int> dropped_turns;          // selected turns removed to fit max_len
    std::size_t truncated = 0;               // D_T tokens dropped from the left
};

/// Selected turns must be history turns (< T); duplicates are ignored.
RefinedContext build_refined_context(const corpus::Dialogue& dialogue, int T, const std::vector<int>& selected,
                                     const corpus::DialogueState& prev_state, const corpus::SlotSchema& schema,
                                     const encoder::Vocabulary& vocab, std::size_t max_len);

/// Detokenised C_E[start..end] (inclusive), or nullopt when end < start.
std::optional<std::string> span_text(const RefinedContext& ctx, const encoder::Vocabulary& vocab,
                                     std::size_t start, std::size_t end);

enum class Method { extractive, classification };

const char* method_name(Method m);

struct SlotOutputs {
    Tensor start_logits;      // [1 x |C_E|]
    Tensor end_logits;        // [1 x |C_E|]
    Tensor indicator_logits;  // [1 x #indicators]
    Tensor candidate_logits;  // [1 x #candidates]
};

struct ValuePrediction {
    std::size_t slot = 0;
    Method method = Method::classification;
    std::string value;
    std::size_t start = 0;
    std::size_t end = 0;
    std::optional<std::string> span;  // extracted text, also when rejected
    std::string classified;           // argmax candidate
    std::vector<double> start_probs;
    std::vector<double> end_probs;
    std::vector<double> indicator_probs;
    std::vector<double> candidate_probs;
};

struct GoldTargets {
    bool extractable = false;
    std::size_t start = 0;
    std::size_t end = 0;
    std::optional<std::size_t> candidate;
};

/// Gold span: first occurrence inside the most recent included turn that
/// contains the value. Throws ValidationError when the value is neither
/// extractable nor a candidate.
GoldTargets gold_targets(const RefinedContext& ctx, std::size_t slot, const std::string& value,
                         const corpus::SlotSchema& schema, const encoder::Vocabulary& vocab);

class Generator {
public:
    Generator() = default;
    Generator(ParameterStore& store, const GeneratorConfig& config, const encoder::Encoder& shared,
              const corpus::SlotSchema& schema, const encoder::Vocabulary& vocab);

    const GeneratorConfig& config() const { return config_; }

    /// Contextual matrix of C. Without refinement the rows are taken from the
    /// first-pass encodings in `batch` instead.
    Tensor encode(const RefinedContext& ctx, const encoder::EncodedTurnBatch* batch, double dropout,
                  double word_dropout, bool train, std::mt19937_64& rng) const;

    /// `turn_bias` ([#indicators x 1], optional) is added to the indicator
    /// logits and to the span logits of each turn's positions.
    SlotOutputs heads(const Tensor& context, const RefinedContext& ctx, std::size_t slot,
                      const Tensor& turn_bias = Tensor()) const;

    ValuePrediction decode(const SlotOutputs& out, const RefinedContext& ctx, std::size_t slot) const;

    /// Mean-pooled shared embeddings of each candidate of the slot.
    Tensor candidate_embeddings(std::size_t slot) const;

private:
    GeneratorConfig config_;
    const encoder::Encoder* shared_ = nullptr;
    const corpus::SlotSchema* schema_ = nullptr;
    const encoder::Vocabulary* vocab_ = nullptr;
    encoder::TransformerStack stack_;
    Tensor start_w_, end_w_, indicator_w_, pointer_w_;
    Linear value_proj_;
    std::vector<std::vector<std::size_t>> candidate_ids_;
    std::vector<Tensor> candidate_pool_;  // [#candidates x #tokens] averaging matrices
};

Tensor extractive_loss(const SlotOutputs& out, const GoldTargets& gold);
Tensor classification_loss(const SlotOutputs& out, const GoldTargets& gold);

}  // namespace dicos::generator
