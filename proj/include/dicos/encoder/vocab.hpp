#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dicos/corpus/corpus.hpp"

namespace dicos::encoder {

// Reserved ids; every vocabulary starts with this block in this order.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;
inline constexpr std::size_t kCls = 2;
inline constexpr std::size_t kSep = 3;
inline constexpr std::size_t kSlot = 4;
inline constexpr std::size_t kValue = 5;
inline constexpr std::size_t kBoundary = 6;   // ";" between system and user utterance
inline constexpr std::size_t kIndicator = 7;  // per-turn marker of the refined sequence
inline constexpr std::array<const char*, 8> kReservedTokens = {"[PAD]",  "[UNK]",   "[CLS]", "[SEP]",
                                                               "[SLOT]", "[VALUE]", ";",     "<t>"};

class Vocabulary {
public:
    Vocabulary();

    /// Reserved block, then every corpus and schema token in sorted order.
    static Vocabulary build(const corpus::DialogueCorpus& corpus, const corpus::SlotSchema& schema);
    /// The list must begin with the reserved block; tokens must be unique.
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    /// [UNK] for tokens outside the vocabulary.
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    explicit Vocabulary(int) {}

    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace dicos::encoder
