#include "dicos/selector/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dicos/numerics/ops.hpp"

namespace dicos::selector {

std::size_t SelectionGraph::count(int type) const {
    return static_cast<std::size_t>(
        std::count_if(edges.begin(), edges.end(), [type](const Edge& e) { return e.type == type; }));
}

std::vector<int> latest_update_turns(const std::vector<corpus::DialogueState>& history, std::size_t n_slots) {
    std::vector<int> latest(n_slots, 0);
    std::vector<std::string> value(n_slots, corpus::kNone);
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].values.size() != n_slots) throw std::invalid_argument("latest_update_turns: state size");
        for (std::size_t z = 0; z < n_slots; ++z) {
            if (history[i].values[z] != value[z]) {
                latest[z] = static_cast<int>(i + 1);
                value[z] = history[i].values[z];
            }
        }
    }
    for (std::size_t z = 0; z < n_slots; ++z) {
        if (value[z] == corpus::kNone) latest[z] = 0;
    }
    return latest;
}

std::vector<Edge> build_edges(std::size_t T, const corpus::SlotSchema& schema, std::size_t target,
                              const std::vector<int>& latest_update) {
    const std::size_t J = schema.size();
    if (T < 1) throw std::invalid_argument("build_edges: T must be at least 1");
    if (target >= J) throw std::out_of_range("build_edges: target slot out of range");
    if (latest_update.size() != J) throw std::invalid_argument("build_edges: one latest-update turn per slot");
    auto slot_node = [T](std::size_t z) { return T + z; };
    std::vector<Edge> edges;
    auto add = [&](std::size_t a, std::size_t b, int type) { edges.push_back({std::min(a, b), std::max(a, b), type}); };
    add(slot_node(target), T - 1, 1);
    for (std::size_t z = 0; z < J; ++z) {
        if (z == target) continue;
        add(slot_node(target), slot_node(z), 2);
        const int tz = latest_update[z];
        if (tz > 0) {
            if (static_cast<std::size_t>(tz) >= T) {
                throw std::invalid_argument("build_edges: latest update of slot " + schema[z].name +
                                            " is not a history turn");
            }
            add(slot_node(z), static_cast<std::size_t>(tz - 1), 3);
        }
    }
    for (std::size_t a = 0; a < J; ++a) {
        for (std::size_t b = a + 1; b < J; ++b) {
            if (schema.same_domain(a, b)) add(slot_node(a), slot_node(b), 4);
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

PerspectiveMask PerspectiveMask::from_bits(unsigned bits) {
    PerspectiveMask m;
    for (std::size_t i = 0; i < 3; ++i) m.active[i] = (bits >> i) & 1U;
    return m;
}

std::string PerspectiveMask::name() const {
    static const char* names[] = {"SN-DH", "CT-DH", "IMOR"};
    std::string out;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!active[i]) continue;
        if (!out.empty()) out += " + ";
        out += names[i];
    }
    return out.empty() ? "none" : out;
}

std::vector<int> rank_top_k(const std::vector<double>& scores, std::size_t k) {
    std::vector<int> turns(scores.size());
    std::iota(turns.begin(), turns.end(), 1);
    std::sort(turns.begin(), turns.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a - 1)];
        const double sb = scores[static_cast<std::size_t>(b - 1)];
        if (sa != sb) return sa > sb;
        return a > b;
    });
    turns.resize(std::min(k, turns.size()));
    std::sort(turns.begin(), turns.end());
    return turns;
}

Selector::Selector(ParameterStore& store, const SelectorConfig& config) : config_(config) {
    const std::size_t d = config.d;
    attention_ = encoder::MultiHeadAttention(store, "selector.mhsa", d, config.heads);
    slot_value_ = Linear::create(store, "selector.slot_value", 2 * d, d, false);
    self_ = Linear::create(store, "selector.rgcn.self", d, d);
    for (std::size_t r = 0; r < relation_.size(); ++r) {
        relation_[r] = Linear::create(store, "selector.rgcn.rel" + std::to_string(r + 1), d, d);
    }
    gate_ = Linear::create(store, "selector.rgcn.gate", 2 * d, d);
    for (std::size_t i = 0; i < 3; ++i) {
        fuse_proj_[i] = Linear::create(store, "selector.fuse.proj" + std::to_string(i + 1), d, d, false);
        fuse_gate_[i] = Linear::create(store, "selector.fuse.gate" + std::to_string(i + 1), d, 1, false);
    }
    score_hidden_ = Linear::create(store, "selector.score.hidden", d, d);
    score_out_ = Linear::create(store, "selector.score.out", d, 1);
}

Tensor Selector::sndh(const std::vector<Tensor>& hidden, const std::vector<encoder::TurnLayout>& layouts,
                      std::size_t slot) const {
    std::vector<Tensor> rows;
    rows.reserve(hidden.size());
    for (std::size_t t = 0; t < hidden.size(); ++t) {
        const auto& lay = layouts[t];
        if (lay.d_end <= lay.d_begin) throw std::invalid_argument("sndh: empty dialogue span");
        Tensor query = ops::row(hidden[t], lay.slot_pos.at(slot));
        Tensor span = ops::slice_rows(hidden[t], lay.d_begin, lay.d_end);
        Tensor alpha = ops::softmax(ops::matmul_nt(query, span), 1);
        rows.push_back(ops::matmul(alpha, span));
    }
    return rows.size() == 1 ? rows[0] : ops::concat_rows(rows);
}

Tensor Selector::mhsa(const Tensor& cls) const {
    return ops::add(cls, attention_(cls));
}

Tensor Selector::ctdh(const Tensor& interactions) const {
    const std::size_t T = interactions.rows();
    Tensor current = ops::row(interactions, T - 1);
    Tensor gamma = ops::sigmoid(
        ops::scale(ops::matmul_nt(interactions, current), 1.0 / std::sqrt(static_cast<double>(config_.d))));
    return ops::add(interactions, ops::matmul(gamma, current));
}

Tensor Selector::slot_value_nodes(const Tensor& current_hidden, const encoder::TurnLayout& layout) const {
    Tensor slots = ops::gather_rows(current_hidden, layout.slot_pos);
    Tensor values = ops::gather_rows(current_hidden, layout.value_pos);
    return slot_value_(ops::concat_cols({slots, values}));
}

Tensor Selector::gated_rgcn(const Tensor& init, const std::vector<Edge>& edges, std::size_t hops,
                            GateOverride gate) const {
    const std::size_t n = init.rows();
    // row-normalised adjacency per relation; nodes without neighbours get a zero row
    std::array<std::vector<double>, 4> adjacency;
    std::array<bool, 4> present{};
    for (auto& a : adjacency) a.assign(n * n, 0.0);
    for (const auto& e : edges) {
        if (e.type < 1 || e.type > 4 || e.a >= n || e.b >= n) throw std::invalid_argument("gated_rgcn: bad edge");
        auto& a = adjacency[static_cast<std::size_t>(e.type - 1)];
        a[e.a * n + e.b] = 1.0;
        a[e.b * n + e.a] = 1.0;
        present[static_cast<std::size_t>(e.type - 1)] = true;
    }
    std::array<Tensor, 4> norm;
    for (std::size_t r = 0; r < 4; ++r) {
        if (!present[r]) continue;
        auto& a = adjacency[r];
        for (std::size_t i = 0; i < n; ++i) {
            double deg = 0.0;
            for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
            if (deg > 0.0) {
                for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= deg;
            }
        }
        norm[r] = Tensor({n, n}, a);
    }

    Tensor h = init;
    for (std::size_t l = 0; l < hops; ++l) {
        Tensor u = self_(h);
        for (std::size_t r = 0; r < 4; ++r) {
            if (present[r]) u = ops::add(u, ops::matmul(norm[r], relation_[r](h)));
        }
        Tensor g;
        if (gate == GateOverride::none) {
            g = ops::sigmoid(gate_(ops::concat_cols({u, h})));
        } else {
            g = Tensor::full(h.shape(), gate == GateOverride::open ? 1.0 : 0.0);
        }
        Tensor keep = ops::add_scalar(ops::scale(g, -1.0), 1.0);
        h = ops::add(ops::mul(ops::tanh(u), g), ops::mul(h, keep));
    }
    return h;
}

Fusion Selector::fuse(const Perspectives& p, const PerspectiveMask& mask) const {
    const std::array<const Tensor*, 3> views = {&p.sndh, &p.ctdh, &p.imor};
    const std::size_t T = p.sndh.rows();
    Tensor sum;
    std::vector<Tensor> betas;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!mask.active[i]) {
            betas.push_back(Tensor::zeros({T, 1}));
            continue;
        }
        Tensor beta = ops::sigmoid(fuse_gate_[i](ops::tanh(fuse_proj_[i](*views[i]))));
        Tensor term = ops::scale_rows(*views[i], beta);
        sum = sum.defined() ? ops::add(sum, term) : term;
        betas.push_back(beta);
    }
    if (!sum.defined()) sum = Tensor::zeros({T, config_.d});
    Fusion f;
    f.scores = score_out_(ops::relu(score_hidden_(sum)));
    f.betas = ops::concat_cols(betas);
    return f;
}

namespace {

void check_batch(const encoder::EncodedTurnBatch& batch, std::size_t slot, const corpus::SlotSchema& schema,
                 const std::vector<int>& latest_update) {
    if (batch.size() == 0 || batch.first_turn() != 1) throw std::invalid_argument("selector: needs turns 1..T");
    if (slot >= schema.size()) throw std::out_of_range("selector: slot out of range");
    if (latest_update.size() != schema.size()) throw std::invalid_argument("selector: latest-update size");
}

}  // namespace

SlotSelection Selector::select(const encoder::EncodedTurnBatch& batch, std::size_t slot,
                               const corpus::SlotSchema& schema, const std::vector<int>& latest_update,
                               const PerspectiveMask& mask, GateOverride gate, std::optional<std::size_t> k) const {
    check_batch(batch, slot, schema, latest_update);
    const std::size_t T = batch.size();
    SlotSelection sel;
    sel.slot = slot;
    std::vector<Tensor> hidden;
    std::vector<encoder::TurnLayout> layouts;
    std::vector<Tensor> cls_rows;
    for (std::size_t t = 0; t < T; ++t) {
        sel.gates.push_back(std::make_shared<bool>(false));
        hidden.push_back(ops::grad_gate(batch.turns[t].hidden, sel.gates.back()));
        layouts.push_back(batch.turns[t].layout);
        cls_rows.push_back(ops::row(hidden.back(), layouts.back().cls));
    }
    Perspectives p;
    p.sndh = sndh(hidden, layouts, slot);
    Tensor interactions = mhsa(T == 1 ? cls_rows[0] : ops::concat_rows(cls_rows));
    p.ctdh = ctdh(interactions);
    sel.graph.n_turns = T;
    sel.graph.n_slots = schema.size();
    sel.graph.target = slot;
    sel.graph.latest_update = latest_update;
    sel.graph.edges = build_edges(T, schema, slot, latest_update);
    sel.graph.init = ops::concat_rows({interactions, slot_value_nodes(hidden.back(), layouts.back())});
    p.imor = ops::slice_rows(gated_rgcn(sel.graph.init, sel.graph.edges, config_.hops, gate), 0, T);

    Fusion f = fuse(p, mask);
    sel.scores = f.scores;
    sel.betas = f.betas;
    for (std::size_t t = 0; t + 1 < T; ++t) sel.history_scores.push_back(f.scores.at(t));
    if (T > 1) {
        const std::size_t top = k.value_or(config_.k);
        if (top < 1) throw encoder::ConfigError("selector: k must be at least 1");
        sel.selected = rank_top_k(sel.history_scores, top);
    }
    for (int t : sel.selected) *sel.gates[static_cast<std::size_t>(t - 1)] = true;
    *sel.gates.back() = true;
    return sel;
}

SelectionGraph Selector::build_graph(const encoder::EncodedTurnBatch& batch, std::size_t slot,
                                     const corpus::SlotSchema& schema, const std::vector<int>& latest_update) const {
    check_batch(batch, slot, schema, latest_update);
    const std::size_t T = batch.size();
    std::vector<Tensor> cls_rows;
    for (const auto& et : batch.turns) cls_rows.push_back(ops::row(et.hidden, et.layout.cls));
    SelectionGraph g;
    g.n_turns = T;
    g.n_slots = schema.size();
    g.target = slot;
    g.latest_update = latest_update;
    g.edges = build_edges(T, schema, slot, latest_update);
    Tensor interactions = mhsa(T == 1 ? cls_rows[0] : ops::concat_rows(cls_rows));
    g.init = ops::concat_rows({interactions, slot_value_nodes(batch.current().hidden, batch.current().layout)});
    return g;
}

}  // namespace dicos::selector
