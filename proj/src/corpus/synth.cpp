#include <algorithm>
#include <random>

#include "dicos/corpus/corpus.hpp"

namespace dicos::corpus {

namespace {

enum class ActionKind { state, offer, change };

struct Action {
    std::size_t slot;
    ActionKind kind;
};

struct TurnPlan {
    std::vector<Action> actions;
    bool filler = false;
    int domain_phase = 0;  // 0 for the first domain, 1 for the second
};

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
    return items[d(rng)];
}

bool chance(double p, std::mt19937_64& rng) {
    return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng);
}

// Slot in `from` sharing the attribute of `slot` whose values `slot` can take.
std::optional<std::size_t> partner_slot(const SlotSchema& schema, std::size_t slot,
                                        const std::vector<std::size_t>& from) {
    for (auto z : from) {
        if (z == slot || schema[z].attribute() != schema[slot].attribute()) continue;
        for (std::size_t c = 1; c < schema[z].candidates.size(); ++c) {
            if (schema[slot].has_candidate(schema[z].candidates[c])) return z;
        }
    }
    return std::nullopt;
}

const std::vector<std::string> kStateTemplates = {
    "i want a {d} with {s} .",
    "i need a {d} , {s} please .",
    "can you find me a {d} with {s} ?",
    "i am looking for a {d} with {s} .",
};
const std::vector<std::string> kAckTemplates = {
    "sure , what else do you need for the {d} ?",
    "ok , noted for the {d} .",
    "got it . anything else ?",
    "let me check that for you .",
};
const std::vector<std::string> kFillerSystem = {
    "is there anything else i can help with ?",
    "please wait a moment .",
    "do you need more information ?",
};
const std::vector<std::string> kFillerUser = {
    "let me think about it .",
    "thanks , one moment please .",
    "hmm , give me a second .",
};
const std::vector<std::string> kAcceptUser = {
    "yes , that works .",
    "sounds good to me .",
    "ok , that is fine .",
};
const std::vector<std::string> kCorefTemplates = {
    "for the {d} , use the same {a} as the {p} .",
    "the {d} should have the same {a} as the {p} .",
};

std::string fill(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

}  // namespace

DialogueCorpus synthesize_corpus(const SlotSchema& schema, const SynthOptions& options) {
    if (options.n_dialogues < 1) throw ValidationError("synthesize_corpus: n_dialogues must be at least 1");
    if (options.max_turns < 1) throw ValidationError("synthesize_corpus: max_turns must be at least 1");
    if (!(options.coref_rate >= 0.0 && options.coref_rate <= 1.0)) {
        throw ValidationError("synthesize_corpus: coref_rate must lie in [0, 1]");
    }
    std::mt19937_64 rng(options.seed);
    DialogueCorpus corpus;

    for (std::size_t n = 0; n < options.n_dialogues; ++n) {
        // domain choice: two distinct domains when available
        std::vector<std::string> domains = schema.domains();
        std::shuffle(domains.begin(), domains.end(), rng);
        if (domains.size() > 2) domains.resize(2);
        std::vector<std::vector<std::size_t>> goals(domains.size());
        std::vector<std::size_t> first_slots = schema.slots_in_domain(domains[0]);
        const std::size_t goal_cap = std::max<std::size_t>(1, std::min<std::size_t>(3, options.max_turns / 2));
        for (std::size_t p = 0; p < domains.size(); ++p) {
            auto slots = schema.slots_in_domain(domains[p]);
            std::shuffle(slots.begin(), slots.end(), rng);
            std::uniform_int_distribution<std::size_t> count(1, std::min(goal_cap, slots.size()));
            slots.resize(count(rng));
            goals[p] = std::move(slots);
        }
        if (domains.size() == 2 && options.coref_rate > 0.0) {
            // make sure one second-domain goal can refer back to the first domain
            auto second = schema.slots_in_domain(domains[1]);
            std::shuffle(second.begin(), second.end(), rng);
            for (auto s : second) {
                auto partner = partner_slot(schema, s, first_slots);
                if (!partner) continue;
                auto& g1 = goals[1];
                g1.erase(std::remove(g1.begin(), g1.end(), s), g1.end());
                g1.insert(g1.begin(), s);
                if (g1.size() > goal_cap) g1.pop_back();
                auto& g0 = goals[0];
                if (std::find(g0.begin(), g0.end(), *partner) == g0.end()) {
                    g0.insert(g0.begin(), *partner);
                    if (g0.size() > goal_cap) g0.pop_back();
                }
                break;
            }
        }

        std::vector<TurnPlan> plan;
        for (std::size_t p = 0; p < goals.size(); ++p) {
            std::size_t i = 0;
            std::vector<std::size_t> done;
            while (i < goals[p].size()) {
                TurnPlan tp;
                tp.domain_phase = static_cast<int>(p);
                std::size_t take = (goals[p].size() - i >= 2 && chance(0.35, rng)) ? 2 : 1;
                for (std::size_t k = 0; k < take; ++k) {
                    tp.actions.push_back({goals[p][i], ActionKind::state});
                    done.push_back(goals[p][i]);
                    ++i;
                }
                if (take == 1 && chance(0.3, rng)) tp.actions[0].kind = ActionKind::offer;
                plan.push_back(tp);
                if (chance(0.15, rng)) plan.push_back(TurnPlan{{}, true, static_cast<int>(p)});
            }
            if (chance(0.15, rng)) {
                plan.push_back(TurnPlan{{{pick(done, rng), ActionKind::change}}, false, static_cast<int>(p)});
            }
        }
        // fit into max_turns: fillers go first, then value changes, then trailing turns
        for (auto droppable : {+[](const TurnPlan& tp) { return tp.filler; },
                               +[](const TurnPlan& tp) {
                                   return !tp.actions.empty() && tp.actions[0].kind == ActionKind::change;
                               }}) {
            while (plan.size() > options.max_turns) {
                auto it = std::find_if(plan.rbegin(), plan.rend(), droppable);
                if (it == plan.rend()) break;
                plan.erase(std::next(it).base());
            }
        }
        if (plan.size() > options.max_turns) plan.resize(options.max_turns);

        Dialogue d;
        d.dialogue_id = options.id_prefix + "-" + std::to_string(n);
        DialogueState state = DialogueState::empty(schema);
        // turn in which each slot's current value was stated verbatim (0 = never)
        std::vector<int> stated_in(schema.size(), 0);
        for (std::size_t ti = 0; ti < plan.size(); ++ti) {
            const int t = static_cast<int>(ti + 1);
            const TurnPlan& tp = plan[ti];
            const std::string& domain = domains[static_cast<std::size_t>(tp.domain_phase)];
            std::map<std::size_t, std::set<int>> evidence;
            std::vector<std::string> stated_pairs;
            std::vector<std::string> coref_phrases;
            std::string system;
            std::string user;
            std::vector<std::size_t> explicit_slots;
            std::vector<std::size_t> coref_slots;

            for (const auto& action : tp.actions) {
                const Slot& slot = schema[action.slot];
                if (action.kind != ActionKind::change && tp.domain_phase == 1) {
                    auto partner = partner_slot(schema, action.slot, first_slots);
                    if (partner && stated_in[*partner] > 0 && stated_in[*partner] < t &&
                        state.values[*partner] != kNone && state.values[*partner] != state.values[action.slot] &&
                        slot.has_candidate(state.values[*partner]) && chance(options.coref_rate, rng)) {
                        state.values[action.slot] = state.values[*partner];
                        evidence[action.slot] = {stated_in[*partner], t};
                        coref_slots.push_back(action.slot);
                        std::string phrase = pick(kCorefTemplates, rng);
                        phrase = fill(fill(fill(phrase, "{d}", slot.domain), "{a}", slot.attribute()), "{p}",
                                      schema[*partner].domain);
                        coref_phrases.push_back(phrase);
                        continue;
                    }
                }
                std::vector<std::string> options_for;
                for (std::size_t c = 1; c < slot.candidates.size(); ++c) {
                    if (slot.candidates[c] != state.values[action.slot]) options_for.push_back(slot.candidates[c]);
                }
                if (options_for.empty()) continue;
                const std::string value = pick(options_for, rng);
                state.values[action.slot] = value;
                stated_in[action.slot] = t;
                evidence[action.slot] = {t};
                explicit_slots.push_back(action.slot);
                if (action.kind == ActionKind::offer) {
                    system = "how about " + value + " for the " + slot.domain + " " + slot.attribute() + " ?";
                    user = pick(kAcceptUser, rng);
                } else if (action.kind == ActionKind::change) {
                    user = "actually , change the " + slot.domain + " " + slot.attribute() + " to " + value + " .";
                } else {
                    stated_pairs.push_back(slot.attribute() + " " + value);
                }
            }

            if (tp.filler) {
                system = pick(kFillerSystem, rng);
                user = pick(kFillerUser, rng);
            }
            if (!stated_pairs.empty()) {
                std::string joined;
                for (std::size_t k = 0; k < stated_pairs.size(); ++k) {
                    if (k) joined += " and ";
                    joined += stated_pairs[k];
                }
                user = fill(fill(pick(kStateTemplates, rng), "{d}", domain), "{s}", joined);
            }
            for (const auto& phrase : coref_phrases) user += (user.empty() ? "" : " ") + phrase;
            if (system.empty() && t > 1) system = fill(pick(kAckTemplates, rng), "{d}", domain);

            Turn turn{t, system, user};
            // a referenced value that happens to be spelled out is an ordinary mention
            for (auto s : coref_slots) {
                if (value_in_turn(turn, state.values[s])) {
                    evidence[s] = {t};
                    stated_in[s] = t;
                }
            }
            d.turns.push_back(std::move(turn));
            d.gold_states.push_back(state);
            d.evidence.push_back(std::move(evidence));
        }
        validate_dialogue(d, schema);
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

}  // namespace dicos::corpus
