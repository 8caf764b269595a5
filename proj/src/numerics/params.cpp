#include "dicos/numerics/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dicos/numerics/ops.hpp"

namespace dicos {

namespace {
constexpr char kMagic[8] = {'D', 'C', 'P', 'A', 'R', 'M', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated parameter file");
    return v;
}
}  // namespace

Tensor ParameterStore::add(const std::string& name, Shape shape, Init init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t = Tensor::zeros(shape, true);
    if (init == Init::ones) {
        for (auto& v : t.mutable_data()) v = 1.0;
    } else if (init == Init::xavier_uniform) {
        // fan_in/fan_out from the last two extents; vectors use (1, n)
        double fan_in = shape.size() >= 2 ? static_cast<double>(shape[shape.size() - 2]) : 1.0;
        double fan_out = static_cast<double>(shape.back());
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : t.mutable_data()) v = dist(rng_);
    }
    index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return params_[it->second].tensor;
}

std::size_t ParameterStore::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterStore::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint64_t>(os, params_.size());
    for (const auto& p : params_) {
        write_pod<std::uint64_t>(os, p.name.size());
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_pod<std::uint64_t>(os, p.tensor.dim());
        for (auto e : p.tensor.shape()) write_pod<std::uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
                 static_cast<std::streamsize>(p.tensor.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

void ParameterStore::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(path.string() + " is not a parameter file");
    }
    auto count = read_pod<std::uint64_t>(is);
    if (count != params_.size()) {
        throw std::runtime_error("parameter count mismatch: file has " + std::to_string(count) + ", model has " +
                                 std::to_string(params_.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        auto len = read_pod<std::uint64_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        auto rank = read_pod<std::uint64_t>(is);
        Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(read_pod<std::uint64_t>(is));
        auto it = index_.find(name);
        if (it == index_.end()) throw std::runtime_error("checkpoint has unknown parameter " + name);
        Tensor& t = params_[it->second].tensor;
        if (t.shape() != shape) {
            throw std::runtime_error("shape mismatch for " + name + ": " + shape_to_string(shape) + " vs " +
                                     shape_to_string(t.shape()));
        }
        is.read(reinterpret_cast<char*>(t.mutable_data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw std::runtime_error("truncated parameter file");
    }
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
    if (other.params_.size() != params_.size()) throw std::invalid_argument("parameter layout mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != other.params_[i].name || params_[i].tensor.shape() != other.params_[i].tensor.shape()) {
            throw std::invalid_argument("parameter layout mismatch at " + params_[i].name);
        }
        auto src = other.params_[i].tensor.data();
        std::copy(src.begin(), src.end(), params_[i].tensor.mutable_data().begin());
    }
}

Tensor apply_activation(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::relu: return ops::relu(x);
        case Activation::tanh: return ops::tanh(x);
        case Activation::sigmoid: return ops::sigmoid(x);
    }
    return x;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      bool with_bias) {
    Linear l;
    l.name = name;
    l.weight = store.add(name + ".weight", {in, out});
    if (with_bias) l.bias = store.add(name + ".bias", {out}, Init::zeros);
    return l;
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = ops::matmul(x, weight);
    return bias.defined() ? ops::add_bias(y, bias) : y;
}

Tensor mlp_forward(const Tensor& x, std::span<const Linear> layers, Activation activation, bool activate_last) {
    if (layers.empty()) throw DimensionError("mlp_forward: no layers");
    std::size_t width = x.cols();
    for (const auto& layer : layers) {
        if (layer.in_features() != width) {
            throw DimensionError("mlp_forward: layer " + layer.name + " expects " +
                                 std::to_string(layer.in_features()) + " inputs but receives " +
                                 std::to_string(width));
        }
        width = layer.out_features();
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size() || activate_last) h = apply_activation(h, activation);
    }
    return h;
}

}  // namespace dicos
