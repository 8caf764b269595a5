#pragma once

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dicos/selector/selector.hpp"

// Selector fixtures shared by the unit tests and the acceptance run.
namespace dicos::testing {

using corpus::SlotSchema;

inline constexpr std::size_t kD = 8;

inline SlotSchema schema_from_domains(const std::vector<std::string>& domains) {
    std::vector<corpus::Slot> slots;
    for (std::size_t j = 0; j < domains.size(); ++j) {
        corpus::Slot s;
        s.id = j;
        s.name = domains[j] + "-s" + std::to_string(j);
        s.domain = domains[j];
        s.candidates = {"none", "x"};
        slots.push_back(s);
    }
    return SlotSchema(slots);
}

// Turns 1..T with random hidden matrices registered as leaves in `store`.
inline encoder::EncodedTurnBatch fake_batch(ParameterStore& store, std::size_t T, std::size_t J, std::size_t span,
                                     const std::string& prefix = "h") {
    encoder::EncodedTurnBatch b;
    const std::size_t len = 2 + 2 * J + span;
    for (std::size_t t = 1; t <= T; ++t) {
        encoder::EncodedTurn et;
        et.turn = static_cast<int>(t);
        et.hidden = store.add(prefix + std::to_string(t), {len, kD});
        for (std::size_t j = 0; j < J; ++j) {
            et.layout.slot_pos.push_back(1 + 2 * j);
            et.layout.value_pos.push_back(2 + 2 * j);
        }
        et.layout.cls = 0;
        et.layout.d_begin = 2 + 2 * J;
        et.layout.d_end = len;
        b.turns.push_back(et);
    }
    return b;
}

inline std::vector<Parameter> joined(const ParameterStore& a, const ParameterStore& b) {
    std::vector<Parameter> out(a.all().begin(), a.all().end());
    out.insert(out.end(), b.all().begin(), b.all().end());
    return out;
}

// Independent enumeration: every unordered node pair, tested against each rule.
inline std::set<std::tuple<std::size_t, std::size_t, int>> brute_force_edges(std::size_t T, const SlotSchema& schema,
                                                                     std::size_t target,
                                                                     const std::vector<int>& latest) {
    const std::size_t J = schema.size();
    const std::size_t n = T + J;
    auto is_slot = [&](std::size_t v) { return v >= T; };
    std::set<std::tuple<std::size_t, std::size_t, int>> out;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!is_slot(a) && is_slot(b) && b - T == target && a == T - 1) out.insert({a, b, 1});
            if (is_slot(a) && is_slot(b) && (a - T == target || b - T == target)) out.insert({a, b, 2});
            if (!is_slot(a) && is_slot(b) && b - T != target && latest[b - T] > 0 &&
                static_cast<std::size_t>(latest[b - T]) == a + 1) {
                out.insert({a, b, 3});
            }
            if (is_slot(a) && is_slot(b) && schema[a - T].domain == schema[b - T].domain) out.insert({a, b, 4});
        }
    }
    return out;
}

inline std::vector<double> plain_linear(const Linear& l, const std::vector<double>& x) {
    const std::size_t in = l.in_features(), out = l.out_features();
    std::vector<double> y(out, 0.0);
    for (std::size_t c = 0; c < out; ++c) {
        for (std::size_t k = 0; k < in; ++k) y[c] += x[k] * l.weight.at(k, c);
        if (l.bias.defined()) y[c] += l.bias.at(c);
    }
    return y;
}

}  // namespace dicos::testing
