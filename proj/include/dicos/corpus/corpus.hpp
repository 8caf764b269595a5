#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicos::corpus {

inline constexpr const char* kNone = "none";

/// Input data that violates a format or consistency rule.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lowercased whitespace/punctuation tokenisation. Every punctuation mark is
/// its own token except ';', which is reserved as the system/user boundary
/// marker and is treated as whitespace in raw text.
std::vector<std::string> tokenize(const std::string& text);

/// Canonical value form: tokens joined by single spaces.
std::string normalize_value(const std::string& value);

struct Slot {
    std::size_t id = 0;
    std::string name;    // e.g. "hotel-pricerange"
    std::string domain;  // e.g. "hotel"
    std::vector<std::string> candidates;  // normalised; always contains "none"

    /// Part of the name after the first '-', or the whole name.
    std::string attribute() const;
    bool has_candidate(const std::string& value) const;
    std::optional<std::size_t> candidate_index(const std::string& value) const;
};

class SlotSchema {
public:
    SlotSchema() = default;
    explicit SlotSchema(std::vector<Slot> slots);

    static SlotSchema load(const std::filesystem::path& path);
    static SlotSchema from_json_text(const std::string& text);
    std::string to_json_text() const;

    std::size_t size() const { return slots_.size(); }
    const Slot& operator[](std::size_t j) const { return slots_.at(j); }
    const std::vector<Slot>& slots() const { return slots_; }
    std::optional<std::size_t> index_of(const std::string& name) const;
    /// Domains in order of first appearance.
    const std::vector<std::string>& domains() const { return domains_; }
    std::vector<std::size_t> slots_in_domain(const std::string& domain) const;
    bool same_domain(std::size_t a, std::size_t b) const { return slots_.at(a).domain == slots_.at(b).domain; }

    bool operator==(const SlotSchema& other) const;

private:
    std::vector<Slot> slots_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::string> domains_;
};

struct Turn {
    int turn_id = 0;  // 1-based
    std::string system;
    std::string user;
};

/// Total assignment slot id -> normalised value ("none" when unset).
struct DialogueState {
    std::vector<std::string> values;

    static DialogueState empty(const SlotSchema& schema);
    bool operator==(const DialogueState&) const = default;
};

struct Dialogue {
    std::string dialogue_id;
    std::vector<Turn> turns;
    std::vector<DialogueState> gold_states;
    /// Optional per-turn map slot id -> evidence turn ids, only for updated slots.
    /// Empty when the source carries no evidence annotation.
    std::vector<std::map<std::size_t, std::set<int>>> evidence;

    std::size_t size() const { return turns.size(); }
    /// State before turn t (1-based); all-"none" for t == 1.
    DialogueState state_before(int t, const SlotSchema& schema) const;
};

struct DialogueCorpus {
    std::vector<Dialogue> dialogues;

    std::size_t turn_count() const;
};

/// Per turn (index t-1) the slot ids whose value differs from the previous turn.
using UpdateLabels = std::vector<std::set<std::size_t>>;

UpdateLabels derive_update_labels(const Dialogue& dialogue);

/// Checks every Dialogue/DialogueState invariant; throws ValidationError.
void validate_dialogue(const Dialogue& dialogue, const SlotSchema& schema);

/// True when the value's tokens occur contiguously in R_t or U_t.
bool value_in_turn(const Turn& turn, const std::string& value);

/// Minimal history needed to produce V_t^j: the recorded annotation when
/// present, otherwise {t} if the value is stated in turn t, else the latest
/// earlier turn stating it together with t. Throws if j is not updated at t.
std::set<int> evidence_turns(const Dialogue& dialogue, int t, std::size_t slot);

/// Parses one JSONL record; `line` is used in error messages.
Dialogue parse_dialogue(const std::string& json_text, const SlotSchema& schema, std::size_t line);
std::string dialogue_to_json(const Dialogue& dialogue, const SlotSchema& schema);

DialogueCorpus load_corpus(const std::filesystem::path& path, const SlotSchema& schema);
void save_corpus(const std::filesystem::path& path, const DialogueCorpus& corpus, const SlotSchema& schema);

struct SynthOptions {
    std::size_t n_dialogues = 100;
    std::size_t max_turns = 6;
    /// Probability that an update eligible for a cross-slot reference is
    /// phrased as one (the value then never appears in its own turn).
    double coref_rate = 0.3;
    std::uint64_t seed = 0;
    std::string id_prefix = "syn";
};

/// Templated two-domain dialogues with recorded evidence turns.
DialogueCorpus synthesize_corpus(const SlotSchema& schema, const SynthOptions& options);

}  // namespace dicos::corpus
