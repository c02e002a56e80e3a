#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drcbench/checkpoint.hpp"
#include "drcbench/ops.hpp"
#include "drcbench/random.hpp"

namespace drc::ad {

enum class Init { glorot_uniform, zeros, ones };

/// Named trainable tensors plus batch-norm running statistics, in creation
/// order. Parameters are created on first request, so a dry forward pass
/// both validates the layer chain and allocates every weight.
template <typename T>
class ParameterSet {
public:
    explicit ParameterSet(std::uint64_t seed = 0) : rng_(seed) {}

    /// Returns the parameter `name`, creating it if needed. Throws
    /// ShapeError if it exists with another shape.
    Var<T> get(const std::string& name, const Shape& shape, Init init, std::size_t fan_in = 1,
               std::size_t fan_out = 1);
    BatchNormStats<T>& stats(const std::string& name, std::size_t channels);

    const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }
    std::size_t size() const { return params_.size(); }
    /// Total number of trainable scalars.
    std::size_t numel() const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    void zero_grad();
    /// FNV-1a over every parameter value in creation order.
    std::uint64_t checksum() const;

    std::vector<NamedTensor> export_tensors() const;
    /// Loads values for every existing parameter and statistic. Missing or
    /// mis-shaped entries throw FormatError naming the tensor.
    void import_tensors(const std::vector<NamedTensor>& tensors);

    /// Copies values (not graph state) from a set with identical layout.
    template <typename U>
    void copy_values_from(const ParameterSet<U>& other);

private:
    Rng rng_;
    std::vector<std::pair<std::string, Var<T>>> params_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, BatchNormStats<T>> stats_;
};

template <typename T>
template <typename U>
void ParameterSet<T>::copy_values_from(const ParameterSet<U>& other) {
    import_tensors(other.export_tensors());
}

}  // namespace drc::ad
