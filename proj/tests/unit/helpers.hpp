#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "drcbench/random.hpp"
#include "drcbench/tensor.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("drcbench_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

inline drc::ad::Tensor<double> random_tensor(const drc::ad::Shape& shape, std::uint64_t seed, double lo = -1.0,
                                             double hi = 1.0) {
    drc::Rng rng(seed);
    drc::ad::Tensor<double> t(shape);
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

/// Worst relative error between the analytic gradient of `loss` w.r.t. each
/// leaf and a central difference with step h. `loss` must rebuild the graph
/// from the leaves' current values on every call.
inline double gradient_check(std::vector<drc::ad::Var<double>> leaves,
                             const std::function<drc::ad::Var<double>()>& loss, double h = 1e-5) {
    for (auto& l : leaves) l.zero_grad();
    auto out = loss();
    drc::ad::backward(out);
    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves) {
        const auto& g = l.grad();
        analytic.emplace_back(g.empty() ? std::vector<double>(l.value().numel(), 0.0) : g.storage());
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto& data = leaves[k].mutable_value().storage();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double x0 = data[i];
            data[i] = x0 + h;
            const double fp = loss().value()[0];
            data[i] = x0 - h;
            const double fm = loss().value()[0];
            data[i] = x0;
            const double numeric = (fp - fm) / (2 * h);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace testutil
