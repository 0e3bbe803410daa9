#include "syntrans/nnkit.hpp"

#include <cmath>

#include "syntrans/rng.hpp"

namespace syntrans::nn {

Activation Activation::leaky_relu(double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw Error(Errc::ConfigInvalid, "leaky_relu slope must lie in (0,1)");
    }
    return {Kind::leaky_relu, slope};
}

double Activation::apply(double x) const {
    switch (kind) {
    case Kind::identity: return x;
    case Kind::relu: return x > 0.0 ? x : 0.0;
    case Kind::leaky_relu: return x > 0.0 ? x : slope * x;
    case Kind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

double Activation::derivative(double x, double y) const {
    switch (kind) {
    case Kind::identity: return 1.0;
    case Kind::relu: return x > 0.0 ? 1.0 : 0.0;
    case Kind::leaky_relu: return x > 0.0 ? 1.0 : slope;
    case Kind::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

AffineLayer::AffineLayer(std::size_t in_dim, std::size_t out_dim, bool with_bias)
    : weight_(out_dim, in_dim),
      weight_grad_(out_dim, in_dim),
      bias_(out_dim, 0.0),
      bias_grad_(out_dim, 0.0),
      with_bias_(with_bias) {}

AffineLayer AffineLayer::random_init(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                     bool with_bias) {
    if (in_dim == 0 || out_dim == 0) {
        throw Error(Errc::ShapeMismatch, "layer dimensions must be >= 1");
    }
    AffineLayer layer(in_dim, out_dim, with_bias);
    auto eng = rng::make_engine(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& w : layer.weight_.data()) {
        w = rng::uniform(eng, -bound, bound);
    }
    return layer;
}

num::Vector AffineLayer::apply(const num::Vector& x, const Activation& act) const {
    if (x.size() != in_dim()) {
        throw Error(Errc::ShapeMismatch, "affine forward: input length does not match in_dim");
    }
    num::Vector pre = num::matvec(weight_, x);
    if (with_bias_) {
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += bias_[i];
    }
    num::Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = act.apply(pre[i]);
    return out;
}

num::Vector AffineLayer::forward(const num::Vector& x, const Activation& act) {
    if (x.size() != in_dim()) {
        throw Error(Errc::ShapeMismatch, "affine forward: input length does not match in_dim");
    }
    cached_input_ = x;
    cached_pre_ = num::matvec(weight_, x);
    if (with_bias_) {
        for (std::size_t i = 0; i < cached_pre_.size(); ++i) cached_pre_[i] += bias_[i];
    }
    cached_out_.resize(cached_pre_.size());
    for (std::size_t i = 0; i < cached_pre_.size(); ++i) {
        cached_out_[i] = act.apply(cached_pre_[i]);
    }
    cached_act_ = act;
    has_cache_ = true;
    return cached_out_;
}

num::Vector AffineLayer::backward(const num::Vector& upstream) {
    if (!has_cache_) {
        throw Error(Errc::NoCachedForward, "backward called without a cached forward pass");
    }
    if (upstream.size() != out_dim()) {
        throw Error(Errc::ShapeMismatch, "affine backward: upstream length does not match out_dim");
    }
    num::Vector delta(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        delta[i] = upstream[i] * cached_act_.derivative(cached_pre_[i], cached_out_[i]);
    }
    num::add_outer(weight_grad_, delta, cached_input_);
    if (with_bias_) {
        for (std::size_t i = 0; i < delta.size(); ++i) bias_grad_[i] += delta[i];
    }
    has_cache_ = false;
    return num::matvec_transposed(weight_, delta);
}

void AffineLayer::zero_grad() {
    weight_grad_.fill(0.0);
    std::fill(bias_grad_.begin(), bias_grad_.end(), 0.0);
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
    if (!(cfg_.lr > 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
        !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.eps > 0.0)) {
        throw Error(Errc::ConfigInvalid, "invalid Adam hyperparameters");
    }
}

void Adam::add_parameter(std::vector<double>& values, std::vector<double>& grads) {
    if (values.size() != grads.size()) {
        throw Error(Errc::ShapeMismatch, "Adam: parameter and gradient sizes differ");
    }
    slots_.push_back(Slot{&values, &grads,
                          std::vector<double>(values.size(), 0.0),
                          std::vector<double>(values.size(), 0.0)});
}

void Adam::add_layer(AffineLayer& layer) {
    add_parameter(layer.weight().data(), layer.weight_grad().data());
    if (layer.has_bias()) {
        add_parameter(layer.bias(), layer.bias_grad());
    }
}

void Adam::set_lr(double lr) {
    if (!(lr > 0.0)) {
        throw Error(Errc::ConfigInvalid, "learning rate must be positive");
    }
    cfg_.lr = lr;
}

void Adam::step() {
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
    for (Slot& slot : slots_) {
        auto& theta = *slot.values;
        auto& grad = *slot.grads;
        if (theta.size() != grad.size() || theta.size() != slot.m.size()) {
            throw Error(Errc::ShapeMismatch, "Adam: registered buffer was resized");
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            double g = grad[i];
            if (!cfg_.decoupled_weight_decay) {
                g += cfg_.weight_decay * theta[i];
            }
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = slot.m[i] / bias1;
            const double v_hat = slot.v[i] / bias2;
            theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            if (cfg_.decoupled_weight_decay) {
                theta[i] -= cfg_.lr * cfg_.weight_decay * theta[i];
            }
            grad[i] = 0.0;
        }
    }
}

} // namespace syntrans::nn
