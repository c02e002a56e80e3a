#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drcbench/audio.hpp"
#include "drcbench/compressor.hpp"
#include "drcbench/forest.hpp"
#include "json.hpp"

namespace drc {

/// Span used for the %-of-range column: 49 dB, 19, 99 ms, 999 ms.
double report_range(Param p);

inline constexpr std::size_t kClipFeatureCount = 6;
inline constexpr std::size_t kBaselineFeatureCount = 3 * kClipFeatureCount;

/// RMS (dB), crest factor (dB), spectral centroid mean and std (Hz),
/// log10 attack time of the strongest onset (s), envelope autocorrelation
/// decay lag (s). Silent clips give finite values.
std::vector<double> clip_features(const AudioClip& clip);
std::vector<std::string> baseline_feature_names();

/// Unprocessed features, processed features, then processed - unprocessed.
/// Throws InvalidArgument for clips of different length.
std::vector<double> baseline_features(const AudioClip& unprocessed, const AudioClip& processed);

/// 20 log10(peak / rms) with an epsilon guard.
double crest_factor_db(const std::vector<float>& samples);

struct EvalConfig {
    std::size_t n_splits = 50;
    double test_fraction = 0.2;
    bool group_by_loop = true;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

struct ParamScore {
    Param param = Param::thd;
    double mae = 0.0;          // mean over splits of the test MAE
    double mae_std = 0.0;      // spread across splits
    double pct_of_range = 0.0;
    double mean_predictor_mae = 0.0;  // same splits, predicting the training mean
};

struct EvalReport {
    std::string feature_source;
    std::size_t n_entries = 0;
    std::size_t n_loops = 0;
    std::size_t n_features = 0;
    EvalConfig eval;
    ForestConfig forest;
    std::vector<ParamScore> scores;
    nlohmann::json config;  // resolved experiment config

    const ParamScore& score(Param p) const;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Test split of one round: grouped by loop id (sorted unique ids shuffled
/// per split) or per entry. Returns sorted entry indices.
std::vector<std::size_t> test_split(const std::vector<std::string>& groups, const EvalConfig& config,
                                    std::size_t split);

/// Fits a forest per split on the training rows and averages the test MAE.
/// Labels are in physical units, one column per entry of `params`.
/// Throws ProtocolError with fewer than 5 loops under grouped splitting.
EvalReport evaluate(const Matrix& features, const Matrix& labels, const std::vector<Param>& params,
                    const std::vector<std::string>& groups, const ForestConfig& forest, const EvalConfig& config,
                    const std::string& feature_source);

/// Aligned text table: one row per parameter, MAE with unit and % of range.
std::string format_report_table(const EvalReport& r);
std::string format_report_csv(const EvalReport& r);
void write_report(const EvalReport& r, const std::filesystem::path& stem);

/// Feature matrices share the spectrogram cache format (scale = feature_matrix).
void write_feature_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace drc
