#pragma once

#include <cmath>
#include <cstdint>

#include "esrf/error.hpp"
#include "esrf/tensor.hpp"

namespace esrf {

/// Adam with bias correction for a single parameter tensor.
template <typename T>
struct AdamState {
    Tensor<T> first_moment;
    Tensor<T> second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols, double lr)
        : first_moment(rows, cols), second_moment(rows, cols), learning_rate(lr) {}
};

template <typename T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, AdamState<T>& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment))
        throw InputError("adam_step: shape mismatch");
    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    const double lr = state.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads.data[i]);
        double m = b1 * static_cast<double>(state.first_moment.data[i]) + (1.0 - b1) * g;
        double v = b2 * static_cast<double>(state.second_moment.data[i]) + (1.0 - b2) * g * g;
        state.first_moment.data[i] = static_cast<T>(m);
        state.second_moment.data[i] = static_cast<T>(v);
        const double mhat = m / corr1;
        const double vhat = v / corr2;
        params.data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
}

}  // namespace esrf
