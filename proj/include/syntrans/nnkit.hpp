#pragma once

#include <cstdint>
#include <vector>

#include "syntrans/numcore.hpp"

namespace syntrans::nn {

struct Activation {
    enum class Kind { identity, relu, leaky_relu, sigmoid };

    Kind kind = Kind::identity;
    double slope = 0.01; // leaky_relu only, must stay in (0,1)

    static Activation identity() { return {Kind::identity, 0.0}; }
    static Activation relu() { return {Kind::relu, 0.0}; }
    static Activation leaky_relu(double slope = 0.01);
    static Activation sigmoid() { return {Kind::sigmoid, 0.0}; }

    double apply(double x) const;
    // Derivative evaluated from the pre-activation x and cached output y.
    double derivative(double x, double y) const;
};

// Fully connected layer y = act(W x + b). forward() caches the most recent
// pass for backward(); apply() is the stateless inference path for frozen
// layers. Gradients accumulate until the optimizer consumes them.
class AffineLayer {
public:
    AffineLayer() = default;
    AffineLayer(std::size_t in_dim, std::size_t out_dim, bool with_bias = true);

    // Uniform init in [-1/sqrt(in_dim), +1/sqrt(in_dim)], zero bias,
    // deterministic per seed.
    static AffineLayer random_init(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                   bool with_bias = true);

    std::size_t in_dim() const { return weight_.cols(); }
    std::size_t out_dim() const { return weight_.rows(); }
    bool has_bias() const { return with_bias_; }

    num::Vector apply(const num::Vector& x, const Activation& act) const;
    num::Vector forward(const num::Vector& x, const Activation& act);
    num::Vector backward(const num::Vector& upstream);

    void zero_grad();

    num::Matrix& weight() { return weight_; }
    const num::Matrix& weight() const { return weight_; }
    num::Vector& bias() { return bias_; }
    const num::Vector& bias() const { return bias_; }
    num::Matrix& weight_grad() { return weight_grad_; }
    const num::Matrix& weight_grad() const { return weight_grad_; }
    num::Vector& bias_grad() { return bias_grad_; }
    const num::Vector& bias_grad() const { return bias_grad_; }

private:
    num::Matrix weight_;
    num::Matrix weight_grad_;
    num::Vector bias_;
    num::Vector bias_grad_;
    bool with_bias_ = true;

    bool has_cache_ = false;
    Activation cached_act_;
    num::Vector cached_input_;
    num::Vector cached_pre_;
    num::Vector cached_out_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    // L2 term folded into the gradient by default; flip for an AdamW-style
    // update applied directly to the parameters.
    bool decoupled_weight_decay = false;
};

// Adam over externally owned parameter/gradient buffers. Registered buffers
// must outlive the optimizer; step() zeroes the gradients it consumed.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {});

    void add_parameter(std::vector<double>& values, std::vector<double>& grads);
    void add_layer(AffineLayer& layer);
    void step();

    // For schedules: the configured lr is the initial rate.
    void set_lr(double lr);

    std::uint64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Slot {
        std::vector<double>* values;
        std::vector<double>* grads;
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamConfig cfg_;
    std::vector<Slot> slots_;
    std::uint64_t step_count_ = 0;
};

} // namespace syntrans::nn
