#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dicos/corpus/corpus.hpp"

using namespace dicos::corpus;
namespace fs = std::filesystem;

namespace {

const fs::path kData = DICOS_TEST_DATA_DIR;
const fs::path kRepoData = DICOS_REPO_DATA_DIR;

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / ("dicos_corpus_" + name);
    std::ofstream(p) << content;
    return p;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SlotSchema walkthrough_schema() {
    return SlotSchema::load(kData / "walkthrough_schema.json");
}

std::size_t slot(const SlotSchema& s, const std::string& name) {
    return *s.index_of(name);
}

}  // namespace

TEST_CASE("tokenize and normalise") {
    CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
    CHECK(tokenize("a;b") == std::vector<std::string>{"a", "b"});
    CHECK(normalize_value("  17:00 ") == "17 : 00");
    CHECK(normalize_value("Alexander  Bed") == "alexander bed");
}

TEST_CASE("schema: none is always a candidate; duplicates rejected") {
    SlotSchema s = SlotSchema::from_json_text(R"({"slots":[{"name":"a-x","domain":"a","values":["Foo"]}]})");
    CHECK(s[0].candidates == std::vector<std::string>{"none", "foo"});
    CHECK(s[0].attribute() == "x");
    CHECK_THROWS_AS(SlotSchema::from_json_text(
                        R"({"slots":[{"name":"a","domain":"d","values":[]},{"name":"a","domain":"d","values":[]}]})"),
                    ValidationError);
    CHECK_THROWS_AS(SlotSchema::from_json_text(R"({"slots":[]})"), ValidationError);
}

TEST_CASE("load_corpus: empty file is an empty corpus") {
    auto corpus = load_corpus(temp_file("empty.jsonl", ""), walkthrough_schema());
    CHECK(corpus.dialogues.empty());
}

TEST_CASE("load_corpus: unknown slot is named") {
    auto path = temp_file("unknown.jsonl",
                          R"({"dialogue_id":"x","turns":[{"system":"","user":"hi"}],"states":[{"hotel-sort":"a"}]})");
    try {
        load_corpus(path, walkthrough_schema());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("hotel-sort") != std::string::npos);
    }
}

TEST_CASE("load_corpus: malformed JSON reports the line") {
    auto path = temp_file("bad.jsonl", "\n{\"dialogue_id\": \n");
    try {
        load_corpus(path, walkthrough_schema());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("load_corpus: dropping a set slot is a cumulativity violation") {
    auto path = temp_file("noncum.jsonl",
                          R"({"dialogue_id":"x","turns":[{"system":"","user":"a cheap one"},{"system":"ok","user":"ok"}],)"
                          R"("states":[{"hotel-pricerange":"cheap"},{}]})");
    CHECK_THROWS_AS(load_corpus(path, walkthrough_schema()), ValidationError);
    auto explicit_reset =
        temp_file("reset.jsonl",
                  R"({"dialogue_id":"x","turns":[{"system":"","user":"a cheap one"},{"system":"ok","user":"ok"}],)"
                  R"("states":[{"hotel-pricerange":"cheap"},{"hotel-pricerange":"none"}]})");
    CHECK(load_corpus(explicit_reset, walkthrough_schema()).dialogues.size() == 1);
}

TEST_CASE("load_corpus: value neither candidate nor stated is rejected") {
    auto path = temp_file("unsupported.jsonl",
                          R"({"dialogue_id":"x","turns":[{"system":"","user":"hi"}],"states":[{"taxi-leaveat":"09:00"}]})");
    CHECK_THROWS_AS(load_corpus(path, walkthrough_schema()), ValidationError);
}

TEST_CASE("walkthrough dialogue: states, labels and evidence") {
    auto schema = walkthrough_schema();
    auto corpus = load_corpus(kData / "walkthrough.jsonl", schema);
    REQUIRE(corpus.dialogues.size() == 1);
    const Dialogue& d = corpus.dialogues[0];
    REQUIRE(d.size() == 10);

    const auto& turn2 = d.gold_states[1].values;
    CHECK(turn2[slot(schema, "hotel-type")] == "guesthouse");
    CHECK(turn2[slot(schema, "hotel-pricerange")] == "cheap");

    auto labels = derive_update_labels(d);
    CHECK(labels[0] == std::set<std::size_t>{slot(schema, "hotel-type")});
    CHECK(labels[2].empty());
    for (const char* name : {"hotel-name", "hotel-bookday", "hotel-bookpeople", "hotel-bookstay"}) {
        CHECK(labels[4].count(slot(schema, name)) == 1);
    }

    CHECK(evidence_turns(d, 5, slot(schema, "hotel-bookstay")).size() == 1);
    CHECK(evidence_turns(d, 5, slot(schema, "hotel-name")) == std::set<int>{4, 5});
    CHECK(evidence_turns(d, 10, slot(schema, "taxi-destination")).count(7) == 1);
    CHECK(evidence_turns(d, 1, slot(schema, "hotel-type")) == std::set<int>{1});
    CHECK_THROWS_AS(evidence_turns(d, 3, slot(schema, "hotel-type")), std::invalid_argument);
}

TEST_CASE("evidence_turns: derived when no annotation exists") {
    auto schema = walkthrough_schema();
    Dialogue d = load_corpus(kData / "walkthrough.jsonl", schema).dialogues[0];
    d.evidence.clear();
    CHECK(evidence_turns(d, 5, slot(schema, "hotel-bookstay")) == std::set<int>{5});
    CHECK(evidence_turns(d, 5, slot(schema, "hotel-name")) == std::set<int>{4, 5});
    CHECK(evidence_turns(d, 10, slot(schema, "taxi-destination")) == std::set<int>{7, 10});
}

TEST_CASE("derive_update_labels: identical consecutive states give an empty set") {
    auto schema = walkthrough_schema();
    Dialogue d;
    d.dialogue_id = "same";
    d.turns = {{1, "", "a cheap guesthouse"}, {2, "ok", "thanks"}};
    DialogueState s = DialogueState::empty(schema);
    s.values[slot(schema, "hotel-pricerange")] = "cheap";
    d.gold_states = {s, s};
    auto labels = derive_update_labels(d);
    CHECK(labels[0] == std::set<std::size_t>{slot(schema, "hotel-pricerange")});
    CHECK(labels[1].empty());
}

TEST_CASE("round trip: canonical JSONL is reproduced byte for byte") {
    auto schema = walkthrough_schema();
    auto corpus = load_corpus(kData / "walkthrough.jsonl", schema);
    fs::path out = fs::temp_directory_path() / "dicos_corpus_roundtrip.jsonl";
    save_corpus(out, corpus, schema);
    CHECK(read_all(out) == read_all(kData / "walkthrough.jsonl"));

    auto syn_schema = SlotSchema::load(kRepoData / "schema.json");
    auto syn = synthesize_corpus(syn_schema, {30, 6, 0.5, 3, "rt"});
    fs::path a = fs::temp_directory_path() / "dicos_corpus_syn_a.jsonl";
    fs::path b = fs::temp_directory_path() / "dicos_corpus_syn_b.jsonl";
    save_corpus(a, syn, syn_schema);
    save_corpus(b, load_corpus(a, syn_schema), syn_schema);
    CHECK(read_all(a) == read_all(b));
}

TEST_CASE("synthesize_corpus: argument validation") {
    auto schema = SlotSchema::load(kRepoData / "schema.json");
    CHECK_THROWS_AS(synthesize_corpus(schema, {0, 6, 0.3, 1}), ValidationError);
    CHECK_THROWS_AS(synthesize_corpus(schema, {5, 6, 1.5, 1}), ValidationError);
}

TEST_CASE("synthesize_corpus: coref_rate 0 states every value in its own turn") {
    auto schema = SlotSchema::load(kRepoData / "schema.json");
    auto corpus = synthesize_corpus(schema, {150, 6, 0.0, 11});
    for (const auto& d : corpus.dialogues) {
        auto labels = derive_update_labels(d);
        for (std::size_t t = 0; t < d.size(); ++t) {
            for (auto j : labels[t]) CHECK(value_in_turn(d.turns[t], d.gold_states[t].values[j]));
        }
    }
}

TEST_CASE("synthesize_corpus: coref_rate 1 gives every multi-slot dialogue a cross-slot reference") {
    auto schema = SlotSchema::load(kRepoData / "schema.json");
    auto corpus = synthesize_corpus(schema, {150, 6, 1.0, 12});
    for (const auto& d : corpus.dialogues) {
        auto labels = derive_update_labels(d);
        std::set<std::size_t> updated;
        bool has_reference = false;
        for (std::size_t t = 0; t < d.size(); ++t) {
            for (auto j : labels[t]) {
                updated.insert(j);
                if (!value_in_turn(d.turns[t], d.gold_states[t].values[j])) has_reference = true;
            }
        }
        if (updated.size() >= 2) CHECK_MESSAGE(has_reference, d.dialogue_id);
    }
}

TEST_CASE("synthesize_corpus: identical seeds give identical bytes") {
    auto schema = SlotSchema::load(kRepoData / "schema.json");
    fs::path a = fs::temp_directory_path() / "dicos_seed7_a.jsonl";
    fs::path b = fs::temp_directory_path() / "dicos_seed7_b.jsonl";
    save_corpus(a, synthesize_corpus(schema, {40, 6, 0.3, 7}), schema);
    save_corpus(b, synthesize_corpus(schema, {40, 6, 0.3, 7}), schema);
    CHECK(read_all(a) == read_all(b));
    fs::path c = fs::temp_directory_path() / "dicos_seed8.jsonl";
    save_corpus(c, synthesize_corpus(schema, {40, 6, 0.3, 8}), schema);
    CHECK(read_all(a) != read_all(c));
}

TEST_CASE("synthesize_corpus: cumulativity and evidence soundness over many corpora") {
    auto schema = SlotSchema::load(kRepoData / "schema.json");
    std::size_t coref_updates = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto corpus = synthesize_corpus(schema, {60, 2 + seed % 6, 0.5, seed});
        for (const auto& d : corpus.dialogues) {
            CHECK(d.size() <= 2 + seed % 6);
            auto labels = derive_update_labels(d);
            for (std::size_t t = 0; t < d.size(); ++t) {
                for (std::size_t j = 0; j < schema.size(); ++j) {
                    if (t > 0 && d.gold_states[t - 1].values[j] != d.gold_states[t].values[j]) {
                        CHECK(labels[t].count(j) == 1);
                    }
                }
                for (auto j : labels[t]) {
                    const int turn = static_cast<int>(t + 1);
                    auto ev = evidence_turns(d, turn, j);
                    CHECK(ev.count(turn) == 1);
                    bool producible = false;
                    for (int u : ev) producible = producible || value_in_turn(d.turns[static_cast<std::size_t>(u - 1)],
                                                                               d.gold_states[t].values[j]);
                    CHECK(producible);
                    if (!value_in_turn(d.turns[t], d.gold_states[t].values[j])) {
                        ++coref_updates;
                        // the referenced slot's value was set in one of the evidence turns
                        CHECK(ev.size() == 2);
                    }
                }
            }
        }
    }
    CHECK(coref_updates > 0);
}
