#include "drcbench/params.hpp"

#include <bit>
#include <cmath>

#include "drcbench/errors.hpp"

namespace drc::ad {

template <typename T>
Var<T> ParameterSet<T>::get(const std::string& name, const Shape& shape, Init init, std::size_t fan_in,
                            std::size_t fan_out) {
    if (auto it = index_.find(name); it != index_.end()) {
        const Var<T>& v = params_[it->second].second;
        if (v.shape() != shape)
            throw ShapeError("parameter '" + name + "' has shape " + shape_str(v.shape()) + ", layer needs " +
                             shape_str(shape));
        return v;
    }
    Tensor<T> value(shape);
    switch (init) {
        case Init::zeros: break;
        case Init::ones: value.fill(T(1)); break;
        case Init::glorot_uniform: {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : value.storage()) v = static_cast<T>(rng_.uniform(-limit, limit));
            break;
        }
    }
    index_[name] = params_.size();
    params_.emplace_back(name, Var<T>::leaf(std::move(value), true));
    return params_.back().second;
}

template <typename T>
BatchNormStats<T>& ParameterSet<T>::stats(const std::string& name, std::size_t channels) {
    auto [it, inserted] = stats_.try_emplace(name, channels);
    if (!inserted && it->second.mean.numel() != channels)
        throw ShapeError("batch-norm statistics '" + name + "' have " + std::to_string(it->second.mean.numel()) +
                         " channels, layer needs " + std::to_string(channels));
    return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::numel() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().numel();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
}

template <typename T>
std::uint64_t ParameterSet<T>::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [_, v] : params_)
        for (T x : v.value().data()) {
            const auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(x);
            for (std::size_t b = 0; b < sizeof(T); ++b) {
                h ^= (bits >> (8 * b)) & 0xFF;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

template <typename T>
std::vector<NamedTensor> ParameterSet<T>::export_tensors() const {
    std::vector<NamedTensor> out;
    auto push = [&](const std::string& name, const Tensor<T>& t) {
        out.push_back({name, t.shape(), std::vector<float>(t.storage().begin(), t.storage().end())});
    };
    for (const auto& [name, v] : params_) push(name, v.value());
    for (const auto& [name, s] : stats_) {
        push(name + ".running_mean", s.mean);
        push(name + ".running_var", s.var);
    }
    return out;
}

template <typename T>
void ParameterSet<T>::import_tensors(const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    auto load = [&](const std::string& name, Tensor<T>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
        if (it->second->shape != dst.shape())
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second->shape) +
                              ", model needs " + shape_str(dst.shape()));
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<T>(it->second->data[i]);
    };
    for (auto& [name, v] : params_) load(name, v.mutable_value());
    for (auto& [name, s] : stats_) {
        load(name + ".running_mean", s.mean);
        load(name + ".running_var", s.var);
    }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace drc::ad
