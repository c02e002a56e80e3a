#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "drcbench/dataset.hpp"
#include "drcbench/errors.hpp"
#include "drcbench/eval.hpp"
#include "drcbench/forest.hpp"
#include "drcbench/model.hpp"
#include "drcbench/train.hpp"
#include "json.hpp"

namespace drc {

/// Config value that fails validation; the message starts with the field path.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct DatasetConfig {
    Family family = Family::DS1;
    std::size_t loops = 8;
    std::size_t keep = 10;  // settings kept per axis and loop, 0: all
    std::uint64_t seed = 1;
    int sample_rate = kDefaultSampleRate;
    double duration_s = kDefaultClipSeconds;
    std::string source_dir;  // user WAV folder instead of synthetic loops
};

enum class FeatureSource { embedding, baseline };

std::string to_string(FeatureSource f);
FeatureSource feature_source_from_string(const std::string& name);

struct ExperimentConfig {
    DatasetConfig dataset;
    InputSpec input;
    Variant variant = Variant::model1_mel;
    double width = 0.5;
    KernelLayout kernel_layout = KernelLayout::k5_3x3;
    std::size_t embedding_dim = 50;
    TrainConfig train;
    ForestConfig forest;
    EvalConfig eval;
    FeatureSource features = FeatureSource::embedding;
    std::string output_dir = "runs/default";
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::string cache_dir;  // taken from DRCBENCH_CACHE when unset

    ModelSpec model_spec(std::size_t num_para) const;
    void validate() const;

    std::filesystem::path data_root() const { return std::filesystem::path(output_dir) / "data"; }
    std::filesystem::path manifest() const { return manifest_path(data_root(), dataset.family); }
    std::filesystem::path checkpoint() const { return std::filesystem::path(output_dir) / "model" / "model.drcw"; }
    std::filesystem::path feature_file(FeatureSource f) const;
    std::filesystem::path report_dir() const { return std::filesystem::path(output_dir) / "reports"; }
};

/// Every field, fully resolved.
nlohmann::json config_to_json(const ExperimentConfig& c);
/// Overlays `j` on `base`. Unknown keys and bad values raise ConfigError
/// naming the field path (e.g. "train.batch_size").
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Writes config.json into `dir`.
void write_config_snapshot(const ExperimentConfig& c, const std::filesystem::path& dir);

using Progress = std::function<void(const std::string&)>;

DatasetManifest run_generate(const ExperimentConfig& c, const Progress& progress = {});
TrainResult run_train(const ExperimentConfig& c, const Progress& progress = {});
/// Feature matrix for every manifest entry (embedding or baseline), also
/// written to the output directory (stored as float32).
Matrix run_features(const ExperimentConfig& c, FeatureSource source, const Progress& progress = {});
/// Fits one forest on every entry; writes forest.json and a fit summary.
nlohmann::json run_fit(const ExperimentConfig& c, const Progress& progress = {});
EvalReport run_evaluate(const ExperimentConfig& c, const Progress& progress = {});

/// Physical labels of the varying parameters and loop ids, in manifest order.
Matrix manifest_labels(const DatasetManifest& m);
std::vector<std::string> manifest_groups(const DatasetManifest& m);

enum class TableAxis { frame_size, representation, kernel_shape, features };

std::string to_string(TableAxis a);
TableAxis table_axis_from_string(const std::string& name);

struct TableColumn {
    std::string label;
    ExperimentConfig config;
};

struct TableRow {
    std::string label;       // e.g. "Attack" or "Joint (Attack/Release)"
    std::string unit;
    std::vector<double> mae;  // one per column
};

struct TableResult {
    TableAxis axis = TableAxis::frame_size;
    std::vector<std::string> columns;
    std::vector<TableRow> rows;
    std::vector<std::string> notes;  // trend annotations
};

/// Column configs of a sweep derived from `base`.
std::vector<TableColumn> table_columns(const ExperimentConfig& base, TableAxis axis);

/// Runs generate/train/evaluate for every (family, column) and assembles
/// the table. Families default to DS3, DS4 and DM2.
TableResult run_table(const ExperimentConfig& base, TableAxis axis, const std::vector<Family>& families,
                      const Progress& progress = {});

std::string format_table(const TableResult& t);
std::string format_table_csv(const TableResult& t);

}  // namespace drc
