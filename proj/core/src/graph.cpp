#include "biofuse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "biofuse/errors.hpp"

namespace biofuse::autodiff {

namespace {

// Zero the gradient buffers of every node reachable from the output, so a
// repeated backward pass cannot double-count.
void zero_tape(const Tensor& output) {
    std::vector<Node*> stack{output.node().get()};
    std::unordered_set<Node*> seen{output.node().get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        n->grad.clear();
        for (const auto& p : n->parents) {
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
}

}  // namespace

Tensor Graph::eval(const NamedTensors& inputs) {
    output_ = fn_(inputs);
    if (!output_.defined()) throw UsageError("Graph::eval: build function returned no tensor");
    inputs_ = inputs;
    evaluated_ = true;
    return output_;
}

NamedTensors Graph::backprop() {
    if (!evaluated_) throw UsageError("Graph::backprop: called before eval");
    if (output_.numel() != 1) {
        throw UsageError("Graph::backprop: output must be scalar, got shape " +
                         shape_str(output_.shape()));
    }
    zero_tape(output_);
    for (auto& [name, t] : inputs_) t.zero_grad();
    output_.backward();

    NamedTensors grads;
    for (const auto& [name, t] : inputs_) {
        if (t.requires_grad()) grads.emplace(name, Tensor::from(t.shape(), t.grad()));
    }
    return grads;
}

double Graph::grad_check(const NamedTensors& inputs, double step) {
    eval(inputs);
    const NamedTensors analytic = backprop();

    double max_rel = 0.0;
    for (auto& [name, t] : inputs_) {
        if (!t.requires_grad()) continue;
        const auto& ad = analytic.at(name).values();
        auto& vals = t.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + step;
            const double f_plus = fn_(inputs_).item();
            vals[i] = saved - step;
            const double f_minus = fn_(inputs_).item();
            vals[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * step);
            const double denom = std::max({std::abs(ad[i]), std::abs(fd), 1e-3});
            max_rel = std::max(max_rel, std::abs(ad[i] - fd) / denom);
        }
    }
    return max_rel;
}

}  // namespace biofuse::autodiff
