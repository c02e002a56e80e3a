#pragma once

#include <span>
#include <vector>

#include "drcbench/params.hpp"

namespace drc::ad {

/// Running averages of one parameter tensor; sized on the first step.
struct AdadeltaState {
    double rho = 0.95;
    double eps = 1e-6;
    std::vector<double> sq_grad;    // E[g^2]
    std::vector<double> sq_update;  // E[dx^2]
};

/// One Adadelta update in place. Throws NumericError on NaN/Inf gradients
/// and ShapeError if the state belongs to a tensor of another size.
template <typename T>
void adadelta_step(std::span<T> params, std::span<const T> grads, AdadeltaState& state);

/// Adadelta over every parameter of a set. Parameters that received no
/// gradient this step are treated as having a zero gradient.
template <typename T>
class Adadelta {
public:
    explicit Adadelta(ParameterSet<T>& params, double rho = 0.95, double eps = 1e-6)
        : params_(params), rho_(rho), eps_(eps) {}

    void step();

private:
    ParameterSet<T>& params_;
    double rho_;
    double eps_;
    std::vector<AdadeltaState> states_;
};

}  // namespace drc::ad
