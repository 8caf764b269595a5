#include "dicos/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dicos::harness {

namespace {

using corpus::ValidationError;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ValidationError("config: bad value '" + text + "' for " + key);
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
    throw ValidationError("config: bad boolean '" + text + "' for " + key);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

// key -> (setter, getter), in serialisation order
struct Field {
    std::string key;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename M>
Field field(const std::string& key, M TrainConfig::*member) {
    Field f;
    f.key = key;
    f.set = [key, member](TrainConfig& c, const std::string& v) {
        if constexpr (std::is_same_v<M, bool>) {
            c.*member = parse_bool(key, v);
        } else if constexpr (std::is_same_v<M, std::string>) {
            c.*member = v;
        } else {
            c.*member = parse_number<M>(key, v);
        }
    };
    f.get = [member](const TrainConfig& c) -> std::string {
        if constexpr (std::is_same_v<M, bool>) {
            return c.*member ? "1" : "0";
        } else if constexpr (std::is_same_v<M, std::string>) {
            return c.*member;
        } else if constexpr (std::is_floating_point_v<M>) {
            return format_double(c.*member);
        } else {
            return std::to_string(c.*member);
        }
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = {
        field("seed", &TrainConfig::seed),
        field("epochs", &TrainConfig::epochs),
        field("lr", &TrainConfig::lr),
        field("lr_update", &TrainConfig::lr_update),
        field("batch_size", &TrainConfig::batch_size),
        field("weight_decay", &TrainConfig::weight_decay),
        field("warmup", &TrainConfig::warmup),
        field("clip_norm", &TrainConfig::clip_norm),
        field("k", &TrainConfig::k),
        field("hops", &TrainConfig::hops),
        field("update_threshold", &TrainConfig::update_threshold),
        field("dropout", &TrainConfig::dropout),
        field("word_dropout", &TrainConfig::word_dropout),
        field("d", &TrainConfig::d),
        field("n_layers", &TrainConfig::n_layers),
        field("n_heads", &TrainConfig::n_heads),
        field("d_ff", &TrainConfig::d_ff),
        field("max_len", &TrainConfig::max_len),
        field("gen_layers", &TrainConfig::gen_layers),
        field("gen_max_len", &TrainConfig::gen_max_len),
        field("refine", &TrainConfig::refine),
        field("schema", &TrainConfig::schema),
    };
    return all;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(*this, trim(value));
            return;
        }
    }
    throw ValidationError("config: unknown key '" + key + "'");
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ValidationError("config: " + what);
    };
    require(lr > 0.0 && lr_update > 0.0, "learning rates must be positive");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(weight_decay >= 0.0, "weight_decay must be non-negative");
    require(warmup >= 0.0 && warmup <= 1.0, "warmup must lie in [0, 1]");
    require(clip_norm >= 0.0, "clip_norm must be non-negative");
    require(update_threshold > 0.0 && update_threshold < 1.0, "update_threshold must lie in (0, 1)");
    require(gen_max_len >= 4, "gen_max_len too small");
    require(gen_layers == 0 || d % n_heads == 0, "d must be a multiple of n_heads");
    try {
        encoder_config().validate();
    } catch (const encoder::ConfigError& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
    return out;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void TrainConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path.string());
    out << to_text();
}

encoder::EncoderConfig TrainConfig::encoder_config() const {
    encoder::EncoderConfig e;
    e.d = d;
    e.n_layers = n_layers;
    e.n_heads = n_heads;
    e.d_ff = d_ff;
    e.max_len = max_len;
    e.dropout = dropout;
    e.word_dropout = word_dropout;
    return e;
}

selector::SelectorConfig TrainConfig::selector_config() const {
    return {d, n_heads, hops, k};
}

generator::GeneratorConfig TrainConfig::generator_config() const {
    generator::GeneratorConfig g;
    g.d = d;
    g.layers = gen_layers;
    g.heads = n_heads;
    g.d_ff = d_ff;
    g.max_len = gen_max_len;
    g.refine = refine;
    return g;
}

}  // namespace dicos::harness
