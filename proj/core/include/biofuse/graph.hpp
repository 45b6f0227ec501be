#pragma once

#include <functional>
#include <map>
#include <string>

#include "biofuse/tensor.hpp"

namespace biofuse::autodiff {

using NamedTensors = std::map<std::string, Tensor>;

// Named-input wrapper around a tape-building function. eval() runs the
// forward pass and keeps the tape; backprop() then returns the gradient of
// the (scalar) output for every input that requires grad. grad_check()
// compares those gradients against central finite differences computed from
// forward evaluations only.
class Graph {
public:
    using BuildFn = std::function<Tensor(const NamedTensors&)>;

    explicit Graph(BuildFn fn) : fn_(std::move(fn)) {}

    Tensor eval(const NamedTensors& inputs);
    NamedTensors backprop();

    // Max relative error between reverse-mode and central-difference
    // gradients over all elements of all requires-grad inputs. The
    // denominator is max(|ad|, |fd|) floored at 1e-3, so near-zero gradient
    // pairs are compared absolutely.
    double grad_check(const NamedTensors& inputs, double step = 1e-5);

private:
    BuildFn fn_;
    NamedTensors inputs_;
    Tensor output_;
    bool evaluated_ = false;
};

}  // namespace biofuse::autodiff
