#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace drc {

/// Row-major real matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    Matrix select_rows(const std::vector<std::size_t>& idx) const;
};

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 0;  // 0: unlimited
    std::size_t min_samples_leaf = 2;
    std::size_t features_per_split = 0;  // 0: ceil(p / 3)
    bool bootstrap = true;
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    std::size_t resolved_features(std::size_t p) const;
    void validate(std::size_t p) const;
};

void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);

/// CART regression tree: variance-reduction splits, mean-valued leaves.
class RegressionTree {
public:
    struct Node {
        int feature = -1;  // -1: leaf
        double threshold = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        double value = 0.0;
    };

    void fit(const Matrix& X, const std::vector<double>& y, const std::vector<std::size_t>& rows,
             const ForestConfig& config, std::uint64_t seed);
    double predict(const double* x) const;
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t depth() const;
    const std::vector<Node>& nodes() const { return nodes_; }
    static RegressionTree from_nodes(std::vector<Node> nodes);

private:
    std::vector<Node> nodes_;
};

/// One bagged ensemble per target column.
class Forest {
public:
    /// Throws DataError on NaN/Inf or row mismatch, InvalidArgument on a
    /// bad config or fewer than two rows.
    static Forest fit(const Matrix& X, const Matrix& Y, const ForestConfig& config);

    Matrix predict(const Matrix& X) const;
    std::size_t targets() const { return trees_.size(); }
    std::size_t features() const { return features_; }

    nlohmann::json to_json() const;
    static Forest from_json(const nlohmann::json& j);

private:
    std::size_t features_ = 0;
    std::vector<std::vector<RegressionTree>> trees_;  // [target][tree]
};

}  // namespace drc
