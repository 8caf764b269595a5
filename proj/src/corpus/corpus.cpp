#include "dicos/corpus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dicos::corpus {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char raw : text) {
        auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c) || raw == ';') {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            tokens.emplace_back(1, raw);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return tokens;
}

std::string normalize_value(const std::string& value) {
    std::string out;
    for (const auto& tok : tokenize(value)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

std::string Slot::attribute() const {
    auto dash = name.find('-');
    return dash == std::string::npos ? name : name.substr(dash + 1);
}

bool Slot::has_candidate(const std::string& value) const {
    return candidate_index(value).has_value();
}

std::optional<std::size_t> Slot::candidate_index(const std::string& value) const {
    auto it = std::find(candidates.begin(), candidates.end(), value);
    if (it == candidates.end()) return std::nullopt;
    return static_cast<std::size_t>(it - candidates.begin());
}

SlotSchema::SlotSchema(std::vector<Slot> slots) : slots_(std::move(slots)) {
    if (slots_.empty()) throw ValidationError("schema must define at least one slot");
    for (std::size_t j = 0; j < slots_.size(); ++j) {
        Slot& s = slots_[j];
        s.id = j;
        if (s.name.empty()) throw ValidationError("schema slot " + std::to_string(j) + " has an empty name");
        if (s.domain.empty()) throw ValidationError("schema slot " + s.name + " has no domain");
        if (!index_.emplace(s.name, j).second) throw ValidationError("duplicate slot name in schema: " + s.name);
        std::vector<std::string> normalized{kNone};
        for (const auto& v : s.candidates) {
            std::string n = normalize_value(v);
            if (n.empty()) throw ValidationError("slot " + s.name + " has an empty candidate value");
            if (std::find(normalized.begin(), normalized.end(), n) == normalized.end()) normalized.push_back(n);
        }
        s.candidates = std::move(normalized);
        if (std::find(domains_.begin(), domains_.end(), s.domain) == domains_.end()) domains_.push_back(s.domain);
    }
}

SlotSchema SlotSchema::from_json_text(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("schema is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("slots") || !doc["slots"].is_array()) {
        throw ValidationError("schema must be an object with a \"slots\" array");
    }
    std::vector<Slot> slots;
    for (const auto& entry : doc["slots"]) {
        if (!entry.is_object() || !entry.contains("name") || !entry.contains("domain") || !entry.contains("values")) {
            throw ValidationError("schema slot entries need name, domain and values");
        }
        Slot s;
        try {
            s.name = entry["name"].get<std::string>();
            s.domain = entry["domain"].get<std::string>();
            s.candidates = entry["values"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("schema slot has wrong field types: ") + e.what());
        }
        slots.push_back(std::move(s));
    }
    return SlotSchema(std::move(slots));
}

SlotSchema SlotSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read schema " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string SlotSchema::to_json_text() const {
    ordered_json doc;
    doc["slots"] = ordered_json::array();
    for (const auto& s : slots_) {
        ordered_json e;
        e["name"] = s.name;
        e["domain"] = s.domain;
        e["values"] = s.candidates;
        doc["slots"].push_back(std::move(e));
    }
    return doc.dump(2) + "\n";
}

std::optional<std::size_t> SlotSchema::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> SlotSchema::slots_in_domain(const std::string& domain) const {
    std::vector<std::size_t> out;
    for (const auto& s : slots_) {
        if (s.domain == domain) out.push_back(s.id);
    }
    return out;
}

bool SlotSchema::operator==(const SlotSchema& other) const {
    if (slots_.size() != other.slots_.size()) return false;
    for (std::size_t j = 0; j < slots_.size(); ++j) {
        const auto& a = slots_[j];
        const auto& b = other.slots_[j];
        if (a.name != b.name || a.domain != b.domain || a.candidates != b.candidates) return false;
    }
    return true;
}

DialogueState DialogueState::empty(const SlotSchema& schema) {
    return DialogueState{std::vector<std::string>(schema.size(), kNone)};
}

DialogueState Dialogue::state_before(int t, const SlotSchema& schema) const {
    if (t <= 1) return DialogueState::empty(schema);
    return gold_states.at(static_cast<std::size_t>(t - 2));
}

std::size_t DialogueCorpus::turn_count() const {
    std::size_t n = 0;
    for (const auto& d : dialogues) n += d.size();
    return n;
}

UpdateLabels derive_update_labels(const Dialogue& dialogue) {
    UpdateLabels labels(dialogue.gold_states.size());
    for (std::size_t t = 0; t < dialogue.gold_states.size(); ++t) {
        const auto& cur = dialogue.gold_states[t].values;
        for (std::size_t j = 0; j < cur.size(); ++j) {
            const std::string& prev = t == 0 ? std::string(kNone) : dialogue.gold_states[t - 1].values[j];
            if (cur[j] != prev) labels[t].insert(j);
        }
    }
    return labels;
}

namespace {

bool contains_span(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace

bool value_in_turn(const Turn& turn, const std::string& value) {
    auto needle = tokenize(value);
    return contains_span(tokenize(turn.system), needle) || contains_span(tokenize(turn.user), needle);
}

void validate_dialogue(const Dialogue& d, const SlotSchema& schema) {
    const std::string where = "dialogue " + d.dialogue_id + ": ";
    if (d.turns.empty()) throw ValidationError(where + "no turns");
    if (d.turns.size() != d.gold_states.size()) {
        throw ValidationError(where + std::to_string(d.turns.size()) + " turns but " +
                              std::to_string(d.gold_states.size()) + " states");
    }
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
        if (d.turns[t].turn_id != static_cast<int>(t + 1)) throw ValidationError(where + "turn ids not consecutive");
        const auto& values = d.gold_states[t].values;
        if (values.size() != schema.size()) throw ValidationError(where + "state is not total over the schema");
        for (std::size_t j = 0; j < values.size(); ++j) {
            const auto& v = values[j];
            if (v.empty()) throw ValidationError(where + "empty value for " + schema[j].name);
            if (schema[j].has_candidate(v)) continue;
            bool found = false;
            for (std::size_t u = 0; u <= t && !found; ++u) found = value_in_turn(d.turns[u], v);
            if (!found) {
                throw ValidationError(where + "value \"" + v + "\" of " + schema[j].name + " at turn " +
                                      std::to_string(t + 1) + " is neither a candidate nor stated in the dialogue");
            }
        }
    }
    if (!d.evidence.empty()) {
        if (d.evidence.size() != d.turns.size()) throw ValidationError(where + "evidence must have one entry per turn");
        auto labels = derive_update_labels(d);
        for (std::size_t t = 0; t < d.evidence.size(); ++t) {
            for (const auto& [slot, turns] : d.evidence[t]) {
                if (!labels[t].count(slot)) {
                    throw ValidationError(where + "evidence for " + schema[slot].name + " at turn " +
                                          std::to_string(t + 1) + " but the slot is not updated there");
                }
                for (int u : turns) {
                    if (u < 1 || u > static_cast<int>(t + 1)) {
                        throw ValidationError(where + "evidence turn " + std::to_string(u) + " out of range");
                    }
                }
            }
        }
    }
}

std::set<int> evidence_turns(const Dialogue& d, int t, std::size_t slot) {
    if (t < 1 || t > static_cast<int>(d.size())) throw std::out_of_range("evidence_turns: turn out of range");
    auto idx = static_cast<std::size_t>(t - 1);
    const std::string& cur = d.gold_states[idx].values.at(slot);
    const std::string prev = t == 1 ? std::string(kNone) : d.gold_states[idx - 1].values.at(slot);
    if (cur == prev) {
        throw std::invalid_argument("evidence_turns: slot " + std::to_string(slot) + " is not updated at turn " +
                                    std::to_string(t));
    }
    if (!d.evidence.empty()) {
        auto it = d.evidence[idx].find(slot);
        if (it != d.evidence[idx].end()) return it->second;
    }
    if (value_in_turn(d.turns[idx], cur)) return {t};
    for (int u = t - 1; u >= 1; --u) {
        if (value_in_turn(d.turns[static_cast<std::size_t>(u - 1)], cur)) return {u, t};
    }
    return {t};
}

Dialogue parse_dialogue(const std::string& json_text, const SlotSchema& schema, std::size_t line) {
    const std::string where = "line " + std::to_string(line) + ": ";
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(where + "malformed JSON (" + e.what() + ")");
    }
    Dialogue d;
    try {
        if (!doc.is_object()) throw ValidationError("record is not an object");
        d.dialogue_id = doc.at("dialogue_id").get<std::string>();
        const auto& turns = doc.at("turns");
        const auto& states = doc.at("states");
        if (!turns.is_array() || !states.is_array()) throw ValidationError("turns and states must be arrays");
        int id = 1;
        for (const auto& t : turns) {
            d.turns.push_back(Turn{id++, t.at("system").get<std::string>(), t.at("user").get<std::string>()});
        }
        DialogueState prev = DialogueState::empty(schema);
        for (std::size_t t = 0; t < states.size(); ++t) {
            const auto& s = states[t];
            if (!s.is_object()) throw ValidationError("state " + std::to_string(t + 1) + " is not an object");
            DialogueState cur = DialogueState::empty(schema);
            std::vector<bool> mentioned(schema.size(), false);
            for (const auto& [name, value] : s.items()) {
                auto j = schema.index_of(name);
                if (!j) throw ValidationError("unknown slot \"" + name + "\"");
                cur.values[*j] = normalize_value(value.get<std::string>());
                if (cur.values[*j].empty()) cur.values[*j] = kNone;
                mentioned[*j] = true;
            }
            for (std::size_t j = 0; j < schema.size(); ++j) {
                if (!mentioned[j] && prev.values[j] != kNone) {
                    throw ValidationError("state at turn " + std::to_string(t + 1) + " drops slot " + schema[j].name +
                                          " without an explicit change (states must be cumulative)");
                }
            }
            d.gold_states.push_back(cur);
            prev = std::move(cur);
        }
        if (doc.contains("evidence")) {
            for (const auto& e : doc["evidence"]) {
                std::map<std::size_t, std::set<int>> entry;
                for (const auto& [name, ids] : e.items()) {
                    auto j = schema.index_of(name);
                    if (!j) throw ValidationError("unknown slot \"" + name + "\" in evidence");
                    auto v = ids.get<std::vector<int>>();
                    entry[*j] = std::set<int>(v.begin(), v.end());
                }
                d.evidence.push_back(std::move(entry));
            }
        }
        validate_dialogue(d, schema);
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + "bad record structure (" + e.what() + ")");
    }
    return d;
}

std::string dialogue_to_json(const Dialogue& d, const SlotSchema& schema) {
    ordered_json doc;
    doc["dialogue_id"] = d.dialogue_id;
    doc["turns"] = ordered_json::array();
    for (const auto& t : d.turns) {
        ordered_json turn;
        turn["system"] = t.system;
        turn["user"] = t.user;
        doc["turns"].push_back(std::move(turn));
    }
    doc["states"] = ordered_json::array();
    DialogueState prev = DialogueState::empty(schema);
    for (const auto& s : d.gold_states) {
        ordered_json state = ordered_json::object();
        for (std::size_t j = 0; j < schema.size(); ++j) {
            // unset slots are omitted; an explicit reset to none must be written out
            if (s.values[j] != kNone || prev.values[j] != kNone) state[schema[j].name] = s.values[j];
        }
        doc["states"].push_back(std::move(state));
        prev = s;
    }
    if (!d.evidence.empty()) {
        doc["evidence"] = ordered_json::array();
        for (const auto& e : d.evidence) {
            ordered_json entry = ordered_json::object();
            for (const auto& [slot, turns] : e) entry[schema[slot].name] = std::vector<int>(turns.begin(), turns.end());
            doc["evidence"].push_back(std::move(entry));
        }
    }
    return doc.dump();
}

DialogueCorpus load_corpus(const std::filesystem::path& path, const SlotSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read corpus " + path.string());
    DialogueCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        corpus.dialogues.push_back(parse_dialogue(line, schema, line_no));
    }
    return corpus;
}

void save_corpus(const std::filesystem::path& path, const DialogueCorpus& corpus, const SlotSchema& schema) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus " + path.string());
    for (const auto& d : corpus.dialogues) out << dialogue_to_json(d, schema) << '\n';
}

}  // namespace dicos::corpus
