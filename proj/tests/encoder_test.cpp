#include <cmath>
#include <random>

#include "doctest.h"
#include "dicos/encoder/encoder.hpp"
#include "dicos/numerics/grad_check.hpp"
#include "dicos/numerics/ops.hpp"

using namespace dicos;
using namespace dicos::encoder;
using corpus::Dialogue;
using corpus::DialogueCorpus;
using corpus::DialogueState;
using corpus::SlotSchema;

namespace {

const std::filesystem::path kData = DICOS_TEST_DATA_DIR;

std::vector<std::string> names(const Vocabulary& v, const std::vector<std::size_t>& ids) {
    std::vector<std::string> out;
    for (auto id : ids) out.push_back(v.token(id));
    return out;
}

Dialogue single_turn(const SlotSchema& schema, std::string system, std::string user) {
    Dialogue d;
    d.dialogue_id = "t";
    d.turns.push_back({1, std::move(system), std::move(user)});
    d.gold_states.push_back(DialogueState::empty(schema));
    return d;
}

struct Walkthrough {
    SlotSchema schema = SlotSchema::load(kData / "walkthrough_schema.json");
    DialogueCorpus corpus = corpus::load_corpus(kData / "walkthrough.jsonl", schema);
    Vocabulary vocab = Vocabulary::build(corpus, schema);
    const Dialogue& dialogue() const { return corpus.dialogues.front(); }
};

EncoderConfig small_config(std::size_t layers) {
    EncoderConfig c;
    c.d = 8;
    c.n_layers = layers;
    c.n_heads = 2;
    c.d_ff = 12;
    c.max_len = 128;
    c.dropout = 0.0;
    c.word_dropout = 0.0;
    return c;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a.at(i) != b.at(i)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("assemble_input: minimal single-slot sequence") {
    SlotSchema schema = SlotSchema::from_json_text(
        R"({"slots":[{"name":"hotel-area","domain":"hotel","values":["none","north"]}]})");
    Dialogue d = single_turn(schema, "", "");
    DialogueCorpus c{{d}};
    Vocabulary v = Vocabulary::build(c, schema);
    TurnLayout l = assemble_input(d, 1, DialogueState::empty(schema), schema, v, 64);
    CHECK(names(v, l.ids) ==
          std::vector<std::string>{"[CLS]", "[SLOT]", "hotel", "-", "area", "[VALUE]", "none", "[SEP]", ";", "[SEP]"});
    CHECK(l.cls == 0);
    CHECK(l.slot_pos == std::vector<std::size_t>{1});
    CHECK(l.value_pos == std::vector<std::size_t>{5});
    CHECK(l.d_begin == 8);
    CHECK(l.d_end == 10);
    CHECK(l.truncated == 0);
}

TEST_CASE("assemble_input: previous state values sit in the state block") {
    Walkthrough w;
    const Dialogue& d = w.dialogue();
    DialogueState prev = d.state_before(3, w.schema);
    TurnLayout l = assemble_input(d, 3, prev, w.schema, w.vocab, 256);
    REQUIRE(l.slot_pos.size() == w.schema.size());
    REQUIRE(l.value_pos.size() == w.schema.size());
    auto value_at = [&](const std::string& slot) {
        std::size_t j = *w.schema.index_of(slot);
        return w.vocab.token(l.ids[l.value_pos[j] + 1]);
    };
    CHECK(value_at("hotel-type") == "guesthouse");
    CHECK(value_at("hotel-pricerange") == "cheap");
    CHECK(l.ids[l.d_begin - 1] == kSep);
    for (std::size_t j = 0; j < w.schema.size(); ++j) {
        CHECK(l.ids[l.slot_pos[j]] == kSlot);
        CHECK(l.ids[l.value_pos[j]] == kValue);
        CHECK(l.value_pos[j] < l.d_begin);
    }
    CHECK(l.ids.back() == kSep);
    CHECK(l.d_end == l.ids.size());
}

TEST_CASE("assemble_input: deterministic") {
    Walkthrough w;
    DialogueState prev = w.dialogue().state_before(5, w.schema);
    TurnLayout a = assemble_input(w.dialogue(), 5, prev, w.schema, w.vocab, 256);
    TurnLayout b = assemble_input(w.dialogue(), 5, prev, w.schema, w.vocab, 256);
    CHECK(a.ids == b.ids);
    CHECK(a.slot_pos == b.slot_pos);
}

TEST_CASE("assemble_input: long turns lose their oldest dialogue tokens") {
    Walkthrough w;
    DialogueState prev = w.dialogue().state_before(4, w.schema);
    TurnLayout full = assemble_input(w.dialogue(), 4, prev, w.schema, w.vocab, 512);
    const std::size_t cut = 5;
    TurnLayout l = assemble_input(w.dialogue(), 4, prev, w.schema, w.vocab, full.ids.size() - cut);
    CHECK(l.truncated == cut);
    CHECK(l.ids.size() == full.ids.size() - cut);
    CHECK(std::equal(l.ids.begin(), l.ids.begin() + static_cast<long>(l.d_begin), full.ids.begin()));
    CHECK(std::equal(l.ids.begin() + static_cast<long>(l.d_begin), l.ids.end(),
                     full.ids.begin() + static_cast<long>(full.d_begin + cut)));
    CHECK(l.slot_pos == full.slot_pos);

    CHECK_THROWS_AS(assemble_input(w.dialogue(), 4, prev, w.schema, w.vocab, full.d_begin), ConfigError);
}

TEST_CASE("encoder config validation") {
    EncoderConfig c = small_config(1);
    c.n_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config(1);
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(small_config(2).validate());
}

TEST_CASE("sinusoidal table matches the closed form") {
    Tensor p = sinusoid_positions(7, 6);
    for (std::size_t pos = 0; pos < 7; ++pos) {
        for (std::size_t k = 0; k < 3; ++k) {
            double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(k) / 6.0);
            CHECK(p.at(pos, 2 * k) == doctest::Approx(std::sin(angle)).epsilon(1e-14));
            CHECK(p.at(pos, 2 * k + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-14));
        }
    }
}

TEST_CASE("encode with zero layers is embedding plus position") {
    ParameterStore store(3);
    EncoderConfig cfg = small_config(0);
    Encoder enc(store, cfg, 20);
    std::vector<std::size_t> ids = {2, 9, 4, 4, 17, 3};
    std::mt19937_64 rng(1);
    Tensor h = enc.encode(ids, false, rng);
    const Tensor& table = store.get("embedding.table");
    Tensor pos = sinusoid_positions(ids.size(), cfg.d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t c = 0; c < cfg.d; ++c) {
            double expect = table.at(ids[r], c) * std::sqrt(8.0) + pos.at(r, c);
            CHECK(h.at(r, c) == expect);
        }
    }
}

TEST_CASE("recorded slot and value positions read back planted markers") {
    SlotSchema schema = SlotSchema::from_json_text(R"({"slots":[
        {"name":"alpha","domain":"x","values":["none","red"]},
        {"name":"beta","domain":"x","values":["none","green"]},
        {"name":"gamma","domain":"y","values":["none","blue"]}]})");
    Dialogue d = single_turn(schema, "hello", "red please");
    DialogueCorpus c{{d}};
    Vocabulary v = Vocabulary::build(c, schema);
    ParameterStore store(5);
    EncoderConfig cfg = small_config(0);
    Encoder enc(store, cfg, v.size());
    Tensor table = store.get("embedding.table");
    auto plant = [&](const std::string& token, std::size_t hot) {
        auto row = table.mutable_data().subspan(v.id(token) * cfg.d, cfg.d);
        std::fill(row.begin(), row.end(), 0.0);
        row[hot] = 100.0;
    };
    plant("alpha", 0);
    plant("beta", 1);
    plant("gamma", 2);
    DialogueState prev = DialogueState::empty(schema);
    prev.values = {"red", "green", "blue"};
    plant("red", 3);
    plant("green", 4);
    plant("blue", 5);

    std::mt19937_64 rng(0);
    EncodedTurnBatch b = encode_turns(enc, d, 1, prev, schema, v, false, rng);
    const EncodedTurn& t = b.current();
    Tensor pos = sinusoid_positions(t.layout.ids.size(), cfg.d);
    auto marker = [&](std::size_t row) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cfg.d; ++c) {
            if (t.hidden.at(row, c) - pos.at(row, c) > t.hidden.at(row, best) - pos.at(row, best)) best = c;
        }
        return best;
    };
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(marker(t.layout.slot_pos[j] + 1) == j);
        CHECK(marker(t.layout.value_pos[j] + 1) == j + 3);
    }
}

TEST_CASE("permuting corpus token ids leaves encodings unchanged") {
    Walkthrough w;
    std::vector<std::string> tokens = w.vocab.tokens();
    const std::size_t a = w.vocab.id("guesthouse");
    const std::size_t b = w.vocab.id("cheap");
    std::swap(tokens[a], tokens[b]);
    Vocabulary swapped = Vocabulary::from_tokens(tokens);

    EncoderConfig cfg = small_config(2);
    ParameterStore s1(9), s2(9);
    Encoder e1(s1, cfg, w.vocab.size());
    Encoder e2(s2, cfg, swapped.size());
    Tensor t2 = s2.get("embedding.table");
    auto data = t2.mutable_data();
    std::swap_ranges(data.begin() + static_cast<long>(a * cfg.d), data.begin() + static_cast<long>((a + 1) * cfg.d),
                     data.begin() + static_cast<long>(b * cfg.d));

    DialogueState prev = w.dialogue().state_before(4, w.schema);
    std::mt19937_64 r1(0), r2(0);
    EncodedTurnBatch x = encode_turns(e1, w.dialogue(), 4, prev, w.schema, w.vocab, false, r1);
    EncodedTurnBatch y = encode_turns(e2, w.dialogue(), 4, prev, w.schema, swapped, false, r2);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(bit_equal(x.turns[i].hidden, y.turns[i].hidden));
}

TEST_CASE("editing another turn leaves a turn's encoding bit-identical") {
    Walkthrough w;
    Dialogue edited = w.dialogue();
    edited.turns[0].user = "i need a cheap place in the centre .";
    DialogueState prev = w.dialogue().state_before(3, w.schema);
    ParameterStore store(4);
    Encoder enc(store, small_config(2), w.vocab.size());
    std::mt19937_64 r1(0), r2(0);
    EncodedTurnBatch x = encode_turns(enc, w.dialogue(), 3, prev, w.schema, w.vocab, false, r1);
    EncodedTurnBatch y = encode_turns(enc, edited, 3, prev, w.schema, w.vocab, false, r2);
    CHECK_FALSE(bit_equal(x.turn(1).hidden, y.turn(1).hidden));
    CHECK(bit_equal(x.turn(2).hidden, y.turn(2).hidden));
    CHECK(bit_equal(x.turn(3).hidden, y.turn(3).hidden));
}

TEST_CASE("eval encoding is deterministic and train mode applies dropout") {
    Walkthrough w;
    EncoderConfig cfg = small_config(2);
    cfg.dropout = 0.3;
    cfg.word_dropout = 0.3;
    ParameterStore store(4);
    Encoder enc(store, cfg, w.vocab.size());
    DialogueState prev = w.dialogue().state_before(5, w.schema);
    std::mt19937_64 r1(1), r2(2);
    EncodedTurnBatch a = encode_turns(enc, w.dialogue(), 5, prev, w.schema, w.vocab, false, r1);
    EncodedTurnBatch b = encode_turns(enc, w.dialogue(), 5, prev, w.schema, w.vocab, false, r2);
    CHECK(bit_equal(a.current().hidden, b.current().hidden));
    EncodedTurnBatch c = encode_turns(enc, w.dialogue(), 5, prev, w.schema, w.vocab, true, r1);
    CHECK_FALSE(bit_equal(a.current().hidden, c.current().hidden));
    CHECK(c.current().layout.ids.size() == a.current().layout.ids.size());
}

TEST_CASE("word dropout spares protected tokens") {
    std::vector<std::size_t> ids = {10, 11, kBoundary, 12, kSep};
    std::vector<bool> droppable = {true, true, false, true, false};
    std::mt19937_64 rng(0);
    auto out = word_dropout(ids, droppable, 1.0, rng);
    CHECK(out == std::vector<std::size_t>{kUnk, kUnk, kBoundary, kUnk, kSep});
    CHECK(word_dropout(ids, droppable, 0.0, rng) == ids);
}

TEST_CASE("current-only encoding matches the full batch's last turn") {
    Walkthrough w;
    ParameterStore store(6);
    Encoder enc(store, small_config(1), w.vocab.size());
    DialogueState prev = w.dialogue().state_before(4, w.schema);
    std::mt19937_64 r(0);
    EncodedTurnBatch full = encode_turns(enc, w.dialogue(), 4, prev, w.schema, w.vocab, false, r);
    EncodedTurnBatch cur = encode_turns(enc, w.dialogue(), 4, prev, w.schema, w.vocab, false, r, true);
    CHECK(full.size() == 4);
    CHECK(cur.size() == 1);
    CHECK(cur.current().turn == 4);
    CHECK(bit_equal(full.current().hidden, cur.current().hidden));
}

TEST_CASE("one-layer encoder gradient against central differences") {
    ParameterStore store(21);
    EncoderConfig cfg = small_config(1);
    Encoder enc(store, cfg, 12);
    std::vector<std::size_t> ids = {2, 8, 5, 11, 3};
    std::mt19937_64 wrng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(ids.size() * cfg.d);
    for (auto& x : w) x = u(wrng);
    Tensor weights({ids.size(), cfg.d}, w);
    std::mt19937_64 rng(0);
    GradCheckOptions opt;
    opt.tolerance = 1e-5;
    auto report = grad_check([&] { return ops::sum(ops::mul(enc.encode(ids, false, rng), weights)); }, store.all(),
                             opt);
    CHECK(report.max_rel_error < 1e-5);
    CHECK(report.passed);
}
