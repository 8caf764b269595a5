#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dicos/numerics/tensor.hpp"

namespace dicos {

struct Parameter {
    std::string name;
    Tensor tensor;
};

enum class Init { xavier_uniform, zeros, ones };

/// Owns every trainable tensor of a model under a unique dotted name.
/// Registration order is the canonical order for checkpoints and optimizers.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    /// Registers a new parameter. Xavier-uniform draws from the store's RNG,
    /// so initialisation is a pure function of the seed and registration order.
    Tensor add(const std::string& name, Shape shape, Init init = Init::xavier_uniform);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::span<const Parameter> all() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t element_count() const;

    void zero_grad();

    /// Binary format: magic, count, then per tensor {name, rank, extents, values}.
    void save(const std::filesystem::path& path) const;
    /// Loads values into already-registered parameters; names and shapes must match.
    void load(const std::filesystem::path& path);

    /// Copies values (not grads) from another store with identical layout.
    void copy_values_from(const ParameterStore& other);

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
    std::mt19937_64 rng_;
};

enum class Activation { identity, relu, tanh, sigmoid };

Tensor apply_activation(const Tensor& x, Activation act);

/// Affine map x W + b with W [in x out].
struct Linear {
    std::string name;
    Tensor weight;
    Tensor bias;  // undefined when the layer has no bias

    static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                         bool with_bias = true);
    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }
    Tensor operator()(const Tensor& x) const;
};

/// Affine/activation chain. The last layer is linear unless activate_last.
Tensor mlp_forward(const Tensor& x, std::span<const Linear> layers, Activation activation,
                   bool activate_last = false);

}  // namespace dicos
