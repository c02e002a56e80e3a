#include "drcbench/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drcbench/errors.hpp"
#include "drcbench/parallel.hpp"
#include "drcbench/random.hpp"

namespace drc {

Matrix Matrix::select_rows(const std::vector<std::size_t>& idx) const {
    Matrix m(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(row(idx[i]), cols, m.data.data() + i * cols);
    return m;
}

std::size_t ForestConfig::resolved_features(std::size_t p) const {
    return features_per_split ? features_per_split : (p + 2) / 3;
}

void ForestConfig::validate(std::size_t p) const {
    if (n_trees < 1) throw InvalidArgument("forest.n_trees must be >= 1");
    if (min_samples_leaf < 1) throw InvalidArgument("forest.min_samples_leaf must be >= 1");
    const std::size_t f = resolved_features(p);
    if (f < 1 || f > p)
        throw InvalidArgument("forest.features_per_split must be in [1, " + std::to_string(p) + "]");
}

void to_json(nlohmann::json& j, const ForestConfig& c) {
    j = {{"n_trees", c.n_trees},
         {"max_depth", c.max_depth},
         {"min_samples_leaf", c.min_samples_leaf},
         {"features_per_split", c.features_per_split},
         {"bootstrap", c.bootstrap},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ForestConfig& c) {
    c = ForestConfig{};
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.features_per_split = j.value("features_per_split", c.features_per_split);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.seed = j.value("seed", c.seed);
}

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // SSE reduction
    std::size_t n_left = 0;
};

struct Builder {
    const Matrix& X;
    const std::vector<double>& y;
    const ForestConfig& cfg;
    Rng rng;
    std::vector<RegressionTree::Node>& nodes;
    std::vector<std::pair<double, std::size_t>> scratch;

    // Best split of rows on one feature; rows with equal values never separate.
    void scan(const std::vector<std::size_t>& rows, std::size_t f, double total_sum, Split& best) {
        scratch.clear();
        for (std::size_t r : rows) scratch.emplace_back(X(r, f), r);
        std::sort(scratch.begin(), scratch.end());
        const std::size_t n = scratch.size();
        const std::size_t leaf = cfg.min_samples_leaf;
        double left = 0.0;
        const double parent = total_sum * total_sum / static_cast<double>(n);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left += y[scratch[i].second];
            const std::size_t nl = i + 1, nr = n - nl;
            if (scratch[i].first == scratch[i + 1].first) continue;
            if (nl < leaf || nr < leaf) continue;
            const double right = total_sum - left;
            const double gain = left * left / nl + right * right / nr - parent;
            if (gain > best.score + 1e-12 * std::abs(parent) && gain > 0.0) {
                best.feature = static_cast<int>(f);
                best.threshold = 0.5 * (scratch[i].first + scratch[i + 1].first);
                if (!(best.threshold > scratch[i].first)) best.threshold = scratch[i].first;
                best.score = gain;
                best.n_left = nl;
            }
        }
    }

    std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
        const auto id = static_cast<std::uint32_t>(nodes.size());
        nodes.emplace_back();
        double sum = 0.0, lo = y[rows[0]], hi = y[rows[0]];
        for (std::size_t r : rows) {
            sum += y[r];
            lo = std::min(lo, y[r]);
            hi = std::max(hi, y[r]);
        }
        // Rounding in the division must not step outside the node's targets.
        nodes[id].value = std::clamp(sum / static_cast<double>(rows.size()), lo, hi);

        bool pure = true;
        for (std::size_t r : rows)
            if (y[r] != y[rows[0]]) {
                pure = false;
                break;
            }
        if (pure || rows.size() < 2 * cfg.min_samples_leaf || (cfg.max_depth && depth >= cfg.max_depth)) return id;

        // Random feature order; the first k are the candidate set. If none of
        // them separates the node, later features are tried as well.
        std::vector<std::size_t> order(X.cols);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t k = cfg.resolved_features(X.cols);
        Split best;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i >= k && best.feature >= 0) break;
            scan(rows, order[i], sum, best);
        }
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) (X(r, best.feature) <= best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        nodes[id].feature = best.feature;
        nodes[id].threshold = best.threshold;
        const std::uint32_t l = grow(left, depth + 1);
        const std::uint32_t r = grow(right, depth + 1);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }
};

void check_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw DataError(std::string(what) + " contains NaN or Inf");
}

}  // namespace

void RegressionTree::fit(const Matrix& X, const std::vector<double>& y, const std::vector<std::size_t>& rows,
                         const ForestConfig& config, std::uint64_t seed) {
    nodes_.clear();
    if (rows.empty()) throw InvalidArgument("cannot fit a tree on zero rows");
    Builder b{X, y, config, Rng(seed), nodes_, {}};
    std::vector<std::size_t> r = rows;
    b.grow(r, 0);
}

double RegressionTree::predict(const double* x) const {
    std::uint32_t i = 0;
    while (nodes_[i].feature >= 0) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i].value;
}

std::size_t RegressionTree::depth() const {
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    std::size_t d = 0;
    while (!stack.empty()) {
        auto [i, level] = stack.back();
        stack.pop_back();
        d = std::max(d, level);
        if (nodes_[i].feature >= 0) {
            stack.push_back({nodes_[i].left, level + 1});
            stack.push_back({nodes_[i].right, level + 1});
        }
    }
    return d;
}

Forest Forest::fit(const Matrix& X, const Matrix& Y, const ForestConfig& config) {
    if (X.rows != Y.rows)
        throw DataError("feature rows (" + std::to_string(X.rows) + ") differ from label rows (" +
                        std::to_string(Y.rows) + ")");
    if (X.rows < 2) throw InvalidArgument("forest needs at least two rows");
    if (X.cols == 0 || Y.cols == 0) throw InvalidArgument("forest needs at least one feature and one target");
    check_finite(X, "feature matrix");
    check_finite(Y, "label matrix");
    config.validate(X.cols);

    Forest f;
    f.features_ = X.cols;
    f.trees_.assign(Y.cols, std::vector<RegressionTree>(config.n_trees));
    parallel_for(Y.cols * config.n_trees, config.jobs, [&](std::size_t slot) {
        const std::size_t t = slot / config.n_trees, k = slot % config.n_trees;
        std::vector<double> y(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) y[r] = Y(r, t);
        const std::uint64_t tree_seed = derive_seed(derive_seed(config.seed, t), k);
        std::vector<std::size_t> rows(X.rows);
        if (config.bootstrap) {
            Rng rng(derive_seed(tree_seed, 0xb007));
            for (auto& r : rows) r = static_cast<std::size_t>(rng.below(X.rows));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        f.trees_[t][k].fit(X, y, rows, config, tree_seed);
    });
    return f;
}

Matrix Forest::predict(const Matrix& X) const {
    if (X.cols != features_)
        throw DataError("forest was fit on " + std::to_string(features_) + " features, got " + std::to_string(X.cols));
    check_finite(X, "feature matrix");
    Matrix out(X.rows, trees_.size());
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            double s = 0.0, lo = 0.0, hi = 0.0;
            for (std::size_t k = 0; k < trees_[t].size(); ++k) {
                const double v = trees_[t][k].predict(X.row(r));
                s += v;
                lo = k ? std::min(lo, v) : v;
                hi = k ? std::max(hi, v) : v;
            }
            out(r, t) = std::clamp(s / static_cast<double>(trees_[t].size()), lo, hi);
        }
    return out;
}

RegressionTree RegressionTree::from_nodes(std::vector<Node> nodes) {
    if (nodes.empty()) throw FormatError("tree has no nodes");
    for (const Node& n : nodes)
        if (n.feature >= 0 && (n.left >= nodes.size() || n.right >= nodes.size()))
            throw FormatError("tree node refers to a missing child");
    RegressionTree t;
    t.nodes_ = std::move(nodes);
    return t;
}

nlohmann::json Forest::to_json() const {
    nlohmann::json j = {{"features", features_}, {"targets", nlohmann::json::array()}};
    for (const auto& ensemble : trees_) {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& tree : ensemble) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : tree.nodes()) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
            trees.push_back(std::move(nodes));
        }
        j["targets"].push_back(std::move(trees));
    }
    return j;
}

Forest Forest::from_json(const nlohmann::json& j) {
    Forest f;
    try {
        f.features_ = j.at("features").get<std::size_t>();
        for (const auto& ensemble : j.at("targets")) {
            std::vector<RegressionTree> trees;
            for (const auto& tree : ensemble) {
                std::vector<RegressionTree::Node> nodes;
                for (const auto& n : tree)
                    nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<std::uint32_t>(),
                                     n.at(3).get<std::uint32_t>(), n.at(4).get<double>()});
                trees.push_back(RegressionTree::from_nodes(std::move(nodes)));
            }
            if (trees.empty()) throw FormatError("forest target without trees");
            f.trees_.push_back(std::move(trees));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed forest: ") + e.what());
    }
    return f;
}

}  // namespace drc
