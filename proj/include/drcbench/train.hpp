#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "drcbench/dataset.hpp"
#include "drcbench/model.hpp"
#include "json.hpp"

namespace drc {

struct TrainConfig {
    std::size_t batch_size = 8;
    double validation_fraction = 0.15;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;  // 0 disables early stopping
    std::uint64_t seed = 0;
    /// Stop as soon as an epoch's training MSE falls below this (0: never).
    double target_train_mse = 0.0;
    /// Require at least 10 x batch_size entries.
    bool enforce_min_entries = true;
    bool strict_determinism = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One training example: both branch inputs plus labels in [0, 1].
struct Pair {
    std::vector<float> unprocessed;
    std::vector<float> processed;
    std::vector<float> target;
    std::string loop_id;
};

/// Maps physical labels to [0, 1] over each varying parameter's grid range.
struct LabelScaler {
    std::vector<Param> params;
    std::vector<ParamRange> ranges;

    static LabelScaler for_grid(const GridSpec& grid);
    std::vector<float> normalize(const DrcParams& labels) const;
    /// Back to physical units; values are clamped into the range and the
    /// number of clamped components is added to *clamped when given.
    std::vector<double> denormalize(const std::vector<float>& y, std::size_t* clamped = nullptr) const;
    std::vector<std::string> keys() const;
};

/// Reads every manifest entry and its loop, preprocesses both clips and
/// normalizes labels. With a non-empty `cache_dir`, branch inputs are cached
/// as feature matrices keyed by file and preprocessing settings.
std::vector<Pair> load_pairs(const DatasetManifest& manifest, const std::filesystem::path& root,
                             const InputSpec& input, const LabelScaler& scaler, unsigned jobs = 1,
                             const std::filesystem::path& cache_dir = {});

struct EpochLog {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    std::string stop_reason;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

/// Deterministic train/validation partition of n entries.
void split_train_val(std::size_t n, double validation_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val);

/// Called after every optimizer step with (epoch, step).
using StepHook = std::function<void(std::size_t, std::size_t)>;

/// Adadelta on MSE over normalized labels, early stopping on validation
/// MSE. On return the model holds the best-validation parameters. A NaN
/// loss raises NumericError naming the epoch.
TrainResult train(SiameseModel<float>& model, const std::vector<Pair>& data, const TrainConfig& config,
                  const StepHook& hook = {});

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

/// Merge vectors for every pair in inference mode, [pairs x embedding_dim].
std::vector<std::vector<float>> embed_pairs(SiameseModel<float>& model, const std::vector<Pair>& data,
                                            std::size_t batch_size = 16);

}  // namespace drc
