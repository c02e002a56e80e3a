#include "drcbench/optim.hpp"

#include <cmath>

#include "drcbench/errors.hpp"

namespace drc::ad {

template <typename T>
void adadelta_step(std::span<T> params, std::span<const T> grads, AdadeltaState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n)
        throw ShapeError("adadelta: " + std::to_string(grads.size()) + " gradients for " + std::to_string(n) +
                         " parameters");
    if (state.sq_grad.empty() && state.sq_update.empty()) {
        state.sq_grad.assign(n, 0.0);
        state.sq_update.assign(n, 0.0);
    }
    if (state.sq_grad.size() != n || state.sq_update.size() != n)
        throw ShapeError("adadelta: optimizer state does not match parameter size");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(grads[i])) throw NumericError("adadelta: non-finite gradient");

    const double rho = state.rho, eps = state.eps;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        double& eg = state.sq_grad[i];
        double& ed = state.sq_update[i];
        eg = rho * eg + (1.0 - rho) * g * g;
        const double dx = -std::sqrt(ed + eps) / std::sqrt(eg + eps) * g;
        ed = rho * ed + (1.0 - rho) * dx * dx;
        params[i] = static_cast<T>(params[i] + dx);
    }
}

template <typename T>
void Adadelta<T>::step() {
    const auto& entries = params_.entries();
    while (states_.size() < entries.size()) states_.push_back({rho_, eps_, {}, {}});
    std::vector<T> zeros;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        Var<T> v = entries[k].second;
        std::span<T> values = v.mutable_value().data();
        if (v.grad().empty()) {
            zeros.assign(values.size(), T(0));
            adadelta_step<T>(values, zeros, states_[k]);
        } else {
            adadelta_step<T>(values, v.grad().data(), states_[k]);
        }
    }
}

template void adadelta_step<float>(std::span<float>, std::span<const float>, AdadeltaState&);
template void adadelta_step<double>(std::span<double>, std::span<const double>, AdadeltaState&);
template class Adadelta<float>;
template class Adadelta<double>;

}  // namespace drc::ad
