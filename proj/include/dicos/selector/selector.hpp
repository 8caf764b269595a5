#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "dicos/corpus/corpus.hpp"
#include "dicos/encoder/encoder.hpp"
#include "dicos/numerics/params.hpp"

namespace dicos::selector {

/// Undirected edge between node indices a < b.
struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    int type = 0;  // 1..4

    auto operator<=>(const Edge&) const = default;
};

/// Nodes 0..T-1 are the dialogue nodes of turns 1..T, nodes T..T+J-1 the
/// slot-value nodes of slots 0..J-1.
struct SelectionGraph {
    std::size_t n_turns = 0;
    std::size_t n_slots = 0;
    std::size_t target = 0;
    std::vector<int> latest_update;  // per slot, 0 when undefined
    std::vector<Edge> edges;         // sorted
    Tensor init;                     // [(T+J) x d]; undefined for structure-only graphs

    std::size_t node_count() const { return n_turns + n_slots; }
    std::size_t dialogue_node(int t) const { return static_cast<std::size_t>(t - 1); }
    std::size_t slot_node(std::size_t z) const { return n_turns + z; }
    std::size_t count(int type) const;
};

/// Per slot, the turn of its latest change among `history` (states B_1..B_{T-1});
/// 0 for slots whose current value is "none".
std::vector<int> latest_update_turns(const std::vector<corpus::DialogueState>& history, std::size_t n_slots);

/// Edge rules: (1) target slot to the current turn; (2) target to every other
/// slot; (3) every other slot with a defined latest update to that turn's
/// node; (4) every pair of slots in the same domain.
std::vector<Edge> build_edges(std::size_t T, const corpus::SlotSchema& schema, std::size_t target,
                              const std::vector<int>& latest_update);

enum class GateOverride { none, closed, open };

struct PerspectiveMask {
    std::array<bool, 3> active = {true, true, true};  // SN-DH, CT-DH, IMOR

    static PerspectiveMask from_bits(unsigned bits);
    std::string name() const;
    bool operator==(const PerspectiveMask&) const = default;
};

struct SelectorConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t hops = 3;  // L
    std::size_t k = 2;
};

/// Selected history turns, ascending. Ties prefer the more recent turn.
/// Ranks turns 1..scores.size() (scores[i] belongs to turn i+1).
std::vector<int> rank_top_k(const std::vector<double>& scores, std::size_t k);

struct Perspectives {
    Tensor sndh;  // [T x d]
    Tensor ctdh;
    Tensor imor;
};

struct Fusion {
    Tensor scores;  // [T x 1]
    Tensor betas;   // [T x 3], zero columns for masked perspectives
};

struct SlotSelection {
    std::size_t slot = 0;
    Tensor scores;                     // [T x 1]; row T-1 belongs to the current turn and is never ranked
    std::vector<double> history_scores;  // turns 1..T-1
    std::vector<int> selected;         // U_D, ascending
    Tensor betas;
    SelectionGraph graph;
    std::vector<std::shared_ptr<bool>> gates;  // per turn, open for U_D and T
};

class Selector {
public:
    Selector() = default;
    Selector(ParameterStore& store, const SelectorConfig& config);

    const SelectorConfig& config() const { return config_; }

    /// Attention of the slot's [SLOT] vector over each turn's D_t span.
    Tensor sndh(const std::vector<Tensor>& hidden, const std::vector<encoder::TurnLayout>& layouts,
                std::size_t slot) const;
    /// Multi-head self-attention over the [CLS] vectors with a residual path.
    Tensor mhsa(const Tensor& cls) const;
    /// gamma_t * I_T + I_t with gamma_t = sigmoid(I_t . I_T / sqrt(d)).
    Tensor ctdh(const Tensor& interactions) const;
    /// Slot-value node inputs from the current turn: W_SV [SLOT]^z ; [VALUE]^z.
    Tensor slot_value_nodes(const Tensor& current_hidden, const encoder::TurnLayout& layout) const;
    Tensor gated_rgcn(const Tensor& init, const std::vector<Edge>& edges, std::size_t hops,
                      GateOverride gate = GateOverride::none) const;
    Fusion fuse(const Perspectives& p, const PerspectiveMask& mask) const;

    /// Full selection for one slot with k from the config unless given.
    /// Gradients reach each H_t only through turns in U_D and the current turn.
    SlotSelection select(const encoder::EncodedTurnBatch& batch, std::size_t slot,
                         const corpus::SlotSchema& schema, const std::vector<int>& latest_update,
                         const PerspectiveMask& mask = {}, GateOverride gate = GateOverride::none,
                         std::optional<std::size_t> k = std::nullopt) const;

    /// The graph of select() with its node inputs, for inspection.
    SelectionGraph build_graph(const encoder::EncodedTurnBatch& batch, std::size_t slot,
                               const corpus::SlotSchema& schema, const std::vector<int>& latest_update) const;

    const Linear& gate_layer() const { return gate_; }

private:
    SelectorConfig config_;
    encoder::MultiHeadAttention attention_;
    Linear slot_value_;
    Linear self_;
    std::array<Linear, 4> relation_;
    Linear gate_;
    std::array<Linear, 3> fuse_proj_;
    std::array<Linear, 3> fuse_gate_;
    Linear score_hidden_;
    Linear score_out_;
};

}  // namespace dicos::selector
