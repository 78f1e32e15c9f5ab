// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmimo/linalg.hpp"
#include "fdmimo/rng.hpp"

namespace fdmimo {

enum class Activation { identity, leaky_relu, tanh, sigmoid };

inline std::string activation_name(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation: " + name);
}

inline constexpr double kLeakySlope = 0.2;

inline double activate(Activation a, double z) {
    switch (a) {
    case Activation::identity: return z;
    case Activation::leaky_relu: return z > 0.0 ? z : kLeakySlope * z;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

/// Derivative expressed through the activation output. Valid because every
/// supported activation is sign-preserving or a function of its output.
inline double activate_slope(Activation a, double out) {
    switch (a) {
    case Activation::identity: return 1.0;
    case Activation::leaky_relu: return out > 0.0 ? 1.0 : kLeakySlope;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::sigmoid: return out * (1.0 - out);
    }
    return 1.0;
}

struct Layer {
    Mat weights; // out_dim x in_dim
    Vec bias;    // out_dim
    Activation act = Activation::identity;
};

/// Fully-connected network. Dropout applies to hidden-layer outputs in train
/// mode only (inverted: kept units are scaled by 1/(1-rate), so eval needs no
/// rescaling).
struct Mlp {
    std::vector<Layer> layers;
    double dropout_rate = 0.0;

    [[nodiscard]] int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
    [[nodiscard]] int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }

    void validate() const {
        if (layers.empty())
            throw std::invalid_argument("Mlp: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].bias.size() != layers[i].weights.rows())
                throw std::invalid_argument("Mlp: bias shape mismatch");
            if (i > 0 && layers[i].weights.cols() != layers[i - 1].weights.rows())
                throw std::invalid_argument("Mlp: layer dims do not chain");
            if (!all_finite(layers[i].weights) || !all_finite(layers[i].bias))
                throw std::invalid_argument("Mlp: non-finite parameters");
        }
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("Mlp: dropout_rate out of range");
    }
};

/// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)); zero biases.
inline Mlp make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                    Activation hidden_act, Activation output_act, double dropout, Rng& rng) {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("make_mlp: dims must be positive");
    Mlp net;
    net.dropout_rate = dropout;
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer layer;
        layer.weights = Mat(static_cast<std::size_t>(dims[i + 1]), static_cast<std::size_t>(dims[i]));
        layer.bias.assign(static_cast<std::size_t>(dims[i + 1]), 0.0);
        const double bound = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
        for (auto& w : layer.weights.data())
            w = rng.uniform(-bound, bound);
        layer.act = (i + 2 == dims.size()) ? output_act : hidden_act;
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

enum class RunMode { train, eval };

/// Everything backward() needs: the input, per-layer post-activation outputs
/// (pre-dropout), per-layer actual inputs (post-dropout of the previous
/// layer), and the dropout masks (already scaled by 1/(1-rate)).
struct ForwardCache {
    Mat input;
    std::vector<Mat> layer_inputs;
    std::vector<Mat> activations;
    std::vector<Mat> masks;
};

inline Mat forward(const Mlp& net, const Mat& input, RunMode mode, Rng* rng = nullptr,
                   ForwardCache* cache = nullptr) {
    if (input.rows() != static_cast<std::size_t>(net.input_dim()))
        throw std::invalid_argument("forward: input dim " + std::to_string(input.rows()) +
                                    " does not match network input " + std::to_string(net.input_dim()));
    const bool use_dropout = mode == RunMode::train && net.dropout_rate > 0.0;
    if (use_dropout && rng == nullptr)
        throw std::invalid_argument("forward: train-mode dropout needs an rng");
    if (cache) {
        cache->input = input;
        cache->layer_inputs.clear();
        cache->activations.clear();
        cache->masks.clear();
    }

    Mat x = input;
    const std::size_t n_layers = net.layers.size();
    for (std::size_t i = 0; i < n_layers; ++i) {
        const Layer& layer = net.layers[i];
        if (cache)
            cache->layer_inputs.push_back(x);
        Mat z(layer.weights.rows(), x.cols());
        for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                double acc = layer.bias[r];
                for (std::size_t k = 0; k < layer.weights.cols(); ++k)
                    acc += layer.weights(r, k) * x(k, c);
                z(r, c) = activate(layer.act, acc);
            }
        }
        if (cache)
            cache->activations.push_back(z);
        const bool hidden = i + 1 < n_layers;
        if (hidden && use_dropout) {
            Mat mask(z.rows(), z.cols());
            const double keep = 1.0 - net.dropout_rate;
            for (std::size_t idx = 0; idx < mask.size(); ++idx)
                mask.data()[idx] = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
            for (std::size_t idx = 0; idx < z.size(); ++idx)
                z.data()[idx] *= mask.data()[idx];
            if (cache)
                cache->masks.push_back(std::move(mask));
        } else if (cache) {
            cache->masks.emplace_back();
        }
        x = std::move(z);
    }
    return x;
}

/// Single-sample eval-mode forward.
inline Vec forward_vec(const Mlp& net, std::span<const double> input) {
    Mat x(input.size(), 1);
    for (std::size_t i = 0; i < input.size(); ++i)
        x(i, 0) = input[i];
    Mat y = forward(net, x, RunMode::eval);
    Vec out(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i)
        out[i] = y(i, 0);
    return out;
}

struct MlpGrads {
    std::vector<Mat> dweights;
    std::vector<Vec> dbias;

    void add(const MlpGrads& other) {
        for (std::size_t i = 0; i < dweights.size(); ++i) {
            for (std::size_t k = 0; k < dweights[i].size(); ++k)
                dweights[i].data()[k] += other.dweights[i].data()[k];
            for (std::size_t k = 0; k < dbias[i].size(); ++k)
                dbias[i][k] += other.dbias[i][k];
        }
    }
};

inline MlpGrads zero_grads(const Mlp& net) {
    MlpGrads g;
    for (const Layer& layer : net.layers) {
        g.dweights.emplace_back(layer.weights.rows(), layer.weights.cols());
        g.dbias.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

/// Backpropagate a loss gradient through the cached forward pass. Returns the
/// gradient with respect to the network input; fills parameter gradients when
/// grads is given.
inline Mat backward(const Mlp& net, const ForwardCache& cache, const Mat& grad_output,
                    MlpGrads* grads = nullptr) {
    const std::size_t n_layers = net.layers.size();
    if (cache.layer_inputs.size() != n_layers || cache.activations.size() != n_layers)
        throw std::invalid_argument("backward: cache does not match network");
    if (grad_output.rows() != static_cast<std::size_t>(net.output_dim()) ||
        grad_output.cols() != cache.input.cols())
        throw std::invalid_argument("backward: grad_output shape mismatch");

    Mat g = grad_output;
    for (std::size_t il = n_layers; il-- > 0;) {
        const Layer& layer = net.layers[il];
        const Mat& act = cache.activations[il];
        const Mat& mask = cache.masks[il];
        const bool hidden = il + 1 < n_layers;
        if (hidden && !mask.empty())
            for (std::size_t idx = 0; idx < g.size(); ++idx)
                g.data()[idx] *= mask.data()[idx];
        // dz = g .* act'(z)
        Mat dz(g.rows(), g.cols());
        for (std::size_t idx = 0; idx < g.size(); ++idx)
            dz.data()[idx] = g.data()[idx] * activate_slope(layer.act, act.data()[idx]);
        const Mat& x = cache.layer_inputs[il];
        if (grads) {
            Mat& dw = grads->dweights[il];
            Vec& db = grads->dbias[il];
            for (std::size_t r = 0; r < dz.rows(); ++r) {
                for (std::size_t c = 0; c < dz.cols(); ++c) {
                    const double d = dz(r, c);
                    db[r] += d;
                    for (std::size_t k = 0; k < x.rows(); ++k)
                        dw(r, k) += d * x(k, c);
                }
            }
        }
        Mat gin(x.rows(), dz.cols());
        for (std::size_t k = 0; k < x.rows(); ++k)
            for (std::size_t c = 0; c < dz.cols(); ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < dz.rows(); ++r)
                    acc += layer.weights(r, k) * dz(r, c);
                gin(k, c) = acc;
            }
        g = std::move(gin);
    }
    return g;
}

/// Bias-corrected Adam over a network's parameters; step() descends.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long steps = 0;
    MlpGrads m;
    MlpGrads v;
};

inline AdamState make_adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999) {
    AdamState st;
    st.lr = lr;
    st.beta1 = beta1;
    st.beta2 = beta2;
    st.m = zero_grads(net);
    st.v = zero_grads(net);
    return st;
}

namespace detail {
inline void adam_update(double& p, double& m, double& v, double g, const double lr, const double b1,
                        const double b2, const double eps, const double c1, const double c2) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
}
} // namespace detail

inline void adam_step(Mlp& net, const MlpGrads& grads, AdamState& st) {
    ++st.steps;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.steps));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer& layer = net.layers[i];
        for (std::size_t k = 0; k < layer.weights.size(); ++k)
            detail::adam_update(layer.weights.data()[k], st.m.dweights[i].data()[k],
                                st.v.dweights[i].data()[k], grads.dweights[i].data()[k], st.lr,
                                st.beta1, st.beta2, st.eps, c1, c2);
        for (std::size_t k = 0; k < layer.bias.size(); ++k)
            detail::adam_update(layer.bias[k], st.m.dbias[i][k], st.v.dbias[i][k], grads.dbias[i][k],
                                st.lr, st.beta1, st.beta2, st.eps, c1, c2);
    }
}

/// Flat-vector Adam used by the latent-space solvers.
struct AdamVecState {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long steps = 0;
    Vec m;
    Vec v;
};

inline void adam_step(Vec& params, const Vec& grad, AdamVecState& st) {
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.steps = 0;
    }
    ++st.steps;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.steps));
    for (std::size_t i = 0; i < params.size(); ++i)
        detail::adam_update(params[i], st.m[i], st.v[i], grad[i], st.lr, st.beta1, st.beta2, st.eps,
                            c1, c2);
}

} // namespace fdmimo
