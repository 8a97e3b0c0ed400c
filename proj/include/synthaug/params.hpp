// Named parameter registry and the Adam optimizer. Parameters carry a
// trainable flag the optimizer honors; buffers (batch-norm running stats)
// live beside them and are never optimized.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthaug/tensor.hpp"

namespace synthaug {

template <typename Real>
struct Param {
    std::string name;
    Tensor<Real> value;
    bool trainable = true;
};

template <typename Real>
class ParamSet {
public:
    std::size_t add(std::string name, Tensor<Real> value, bool trainable = true) {
        check_unique(name);
        params_.push_back({std::move(name), std::move(value), trainable});
        index_[params_.back().name] = params_.size() - 1;
        return params_.size() - 1;
    }

    std::size_t add_buffer(std::string name, Tensor<Real> value) {
        check_unique(name);
        buffers_.push_back({std::move(name), std::move(value), false});
        buffer_index_[buffers_.back().name] = buffers_.size() - 1;
        return buffers_.size() - 1;
    }

    std::size_t size() const { return params_.size(); }
    std::size_t buffer_count() const { return buffers_.size(); }

    Param<Real>& operator[](std::size_t i) { return params_[i]; }
    const Param<Real>& operator[](std::size_t i) const { return params_[i]; }
    Param<Real>& buffer(std::size_t i) { return buffers_[i]; }
    const Param<Real>& buffer(std::size_t i) const { return buffers_[i]; }

    Tensor<Real>& value(const std::string& name) { return params_[index_.at(name)].value; }
    const Tensor<Real>& value(const std::string& name) const { return params_[index_.at(name)].value; }
    Tensor<Real>& buffer_value(const std::string& name) { return buffers_[buffer_index_.at(name)].value; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    void set_trainable(bool trainable) {
        for (auto& p : params_) p.trainable = trainable;
    }

    // trainable scalar count / total including buffers
    std::size_t num_trainable() const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (p.trainable) n += p.value.numel();
        return n;
    }
    std::size_t num_params() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    bool bitwise_equal_to(const ParamSet& other) const {
        if (params_.size() != other.params_.size() || buffers_.size() != other.buffers_.size())
            return false;
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name != other.params_[i].name ||
                !bitwise_equal(params_[i].value, other.params_[i].value))
                return false;
        for (std::size_t i = 0; i < buffers_.size(); ++i)
            if (buffers_[i].name != other.buffers_[i].name ||
                !bitwise_equal(buffers_[i].value, other.buffers_[i].value))
                return false;
        return true;
    }

private:
    void check_unique(const std::string& name) const {
        if (index_.count(name) || buffer_index_.count(name))
            throw ValueError("duplicate parameter name: " + name);
    }

    std::vector<Param<Real>> params_;
    std::vector<Param<Real>> buffers_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
};

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamConfig classifier_preset() { return {0.001, 0.9, 0.999, 1e-8}; }
    static AdamConfig gan_preset() { return {0.0002, 0.5, 0.999, 1e-8}; }
};

template <typename Real>
struct AdamState {
    AdamConfig cfg;
    std::uint64_t t = 0;
    std::vector<Tensor<Real>> m;  // aligned with ParamSet indices
    std::vector<Tensor<Real>> v;

    AdamState() = default;
    AdamState(AdamConfig c, const ParamSet<Real>& params) : cfg(c) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m.emplace_back(params[i].value.shape());
            v.emplace_back(params[i].value.shape());
        }
    }
};

// One bias-corrected Adam step. grads is aligned with params; empty slots
// (or frozen parameters) are skipped.
template <typename Real>
void adam_step(ParamSet<Real>& params, const std::vector<Tensor<Real>>& grads, AdamState<Real>& state) {
    if (grads.size() != params.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    state.t += 1;
    const Real lr = Real(state.cfg.learning_rate);
    const Real b1 = Real(state.cfg.beta1), b2 = Real(state.cfg.beta2);
    const Real eps = Real(state.cfg.epsilon);
    const Real bc1 = Real(1) - Real(std::pow(state.cfg.beta1, double(state.t)));
    const Real bc2 = Real(1) - Real(std::pow(state.cfg.beta2, double(state.t)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable || grads[i].numel() == 0) continue;
        Tensor<Real>& p = params[i].value;
        if (!grads[i].same_shape(p))
            throw ShapeError("adam_step: gradient " + shape_str(grads[i].shape()) + " for parameter " +
                             params[i].name + " " + shape_str(p.shape()));
        Tensor<Real>& mi = state.m[i];
        Tensor<Real>& vi = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const Real g = grads[i][j];
            mi[j] = b1 * mi[j] + (Real(1) - b1) * g;
            vi[j] = b2 * vi[j] + (Real(1) - b2) * g * g;
            const Real mhat = mi[j] / bc1;
            const Real vhat = vi[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace synthaug
