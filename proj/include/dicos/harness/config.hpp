#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dicos/encoder/encoder.hpp"
#include "dicos/generator/generator.hpp"
#include "dicos/selector/selector.hpp"

namespace dicos::harness {

/// Every model and training knob. Serialised as flat `key=value` lines.
struct TrainConfig {
    std::uint64_t seed = 13;
    std::size_t epochs = 30;
    double lr = 1e-3;         // encoder, selector, generator
    double lr_update = 1e-3;  // update-predictor head
    std::size_t batch_size = 1;  // dialogues per optimizer step
    double weight_decay = 0.01;
    double warmup = 0.01;  // fraction of steps with linear warmup
    double clip_norm = 5.0;  // 0 disables
    std::size_t k = 2;
    std::size_t hops = 3;
    double update_threshold = 0.5;
    double dropout = 0.1;
    double word_dropout = 0.1;
    std::size_t d = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_len = 128;
    std::size_t gen_layers = 1;
    std::size_t gen_max_len = 256;
    bool refine = true;
    std::string schema;  // path used by the CLI when --schema is absent

    /// Throws ValidationError on an unknown key or malformed value.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    encoder::EncoderConfig encoder_config() const;
    selector::SelectorConfig selector_config() const;
    generator::GeneratorConfig generator_config() const;

    bool operator==(const TrainConfig&) const = default;
};

}  // namespace dicos::harness
