#include "dicos/encoder/vocab.hpp"

#include <fstream>
#include <set>

namespace dicos::encoder {

Vocabulary::Vocabulary() : Vocabulary(from_tokens({kReservedTokens.begin(), kReservedTokens.end()})) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kReservedTokens.size()) throw corpus::ValidationError("vocabulary: missing reserved block");
    for (std::size_t i = 0; i < kReservedTokens.size(); ++i) {
        if (tokens[i] != kReservedTokens[i]) {
            throw corpus::ValidationError("vocabulary: reserved token " + std::to_string(i) + " must be " +
                                          kReservedTokens[i] + ", found " + tokens[i]);
        }
    }
    Vocabulary v(0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].empty()) throw corpus::ValidationError("vocabulary: empty token at " + std::to_string(i));
        if (!v.index_.emplace(tokens[i], i).second) {
            throw corpus::ValidationError("vocabulary: duplicate token " + tokens[i]);
        }
    }
    v.tokens_ = std::move(tokens);
    return v;
}

Vocabulary Vocabulary::build(const corpus::DialogueCorpus& corpus, const corpus::SlotSchema& schema) {
    std::set<std::string> seen;
    auto add_text = [&](const std::string& text) {
        for (auto& tok : corpus::tokenize(text)) seen.insert(tok);
    };
    for (const auto& slot : schema.slots()) {
        add_text(slot.name);
        for (const auto& c : slot.candidates) add_text(c);
    }
    for (const auto& d : corpus.dialogues) {
        for (const auto& turn : d.turns) {
            add_text(turn.system);
            add_text(turn.user);
        }
        for (const auto& state : d.gold_states) {
            for (const auto& v : state.values) add_text(v);
        }
    }
    std::vector<std::string> tokens(kReservedTokens.begin(), kReservedTokens.end());
    for (const auto& tok : seen) {
        if (std::find(tokens.begin(), tokens.end(), tok) == tokens.end()) tokens.push_back(tok);
    }
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw corpus::ValidationError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
    for (const auto& tok : tokens_) out << tok << '\n';
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) out.push_back(id(tok));
    return out;
}

}  // namespace dicos::encoder
