// Glue between ParamSets and a step's tape: parameters become leaves (frozen
// ones without gradient), and after backward the gradients come back aligned
// with parameter indices for the optimizer.
#pragma once

#include <vector>

#include "synthaug/params.hpp"
#include "synthaug/tape.hpp"

namespace synthaug {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Real>
std::vector<Var> bind_params(Tape<Real>& tape, const ParamSet<Real>& params) {
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        vars.push_back(tape.leaf(params[i].value, params[i].trainable));
    return vars;
}

template <typename Real>
std::vector<Var> bind_params_frozen(Tape<Real>& tape, const ParamSet<Real>& params) {
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.leaf(params[i].value, false));
    return vars;
}

template <typename Real>
std::vector<Tensor<Real>> collect_grads(const Tape<Real>& tape, const std::vector<Var>& vars,
                                        const ParamSet<Real>& params) {
    std::vector<Tensor<Real>> grads;
    grads.reserve(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (params[i].trainable)
            grads.push_back(tape.grad(vars[i]));
        else
            grads.emplace_back();  // skipped by the optimizer
    }
    return grads;
}

}  // namespace synthaug
