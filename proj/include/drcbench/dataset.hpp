#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drcbench/audio.hpp"
#include "drcbench/compressor.hpp"
#include "json.hpp"

namespace drc {

enum class Family { DS1, DS2, DS3, DS4, DM1, DM2, D4P };

std::string to_string(Family f);
Family family_from_string(const std::string& name);

/// One varying control. The family's fine grid is
/// start + fine_step * j, j in [0, fine_count); each loop gets every
/// stride-th point (stride = fine_count / settings_per_file) starting at
/// its own offset, so the loops' grids interleave into the fine grid.
struct GridAxis {
    Param param = Param::thd;
    double start = 0.0;
    double fine_step = 1.0;
    std::size_t fine_count = 1;
    std::size_t settings_per_file = 1;
    /// Desk-scale thinning: keep this many of the loop's settings (evenly
    /// spread, endpoints kept). 0 keeps all.
    std::size_t keep = 0;

    std::size_t stride() const { return fine_count / settings_per_file; }
    double per_file_offset_step() const { return stride() > 1 ? fine_step : 0.0; }
    double fine_value(std::size_t j) const;
    /// Range used for label normalization; the lower end is clamped to the
    /// admissible domain.
    ParamRange label_range() const;
};

struct GridSpec {
    Family family = Family::DS1;
    std::vector<GridAxis> axes;
    std::size_t n_loops = 2;
    std::uint64_t seed = 0;
    DrcParams defaults;

    /// The settings (one value per axis, after clamping and de-duplication)
    /// applied to loop `loop_index`, in Cartesian order of the axes.
    std::vector<DrcParams> loop_settings(std::size_t loop_index) const;
    /// Per-axis values of one loop before the Cartesian product.
    std::vector<double> axis_values(std::size_t axis, std::size_t loop_index) const;
    std::size_t num_para() const { return axes.size(); }
    std::vector<Param> varying() const;
    /// Values that were raised to the admissible minimum (DS2 ratios < 1).
    std::size_t clamped_values(std::size_t loop_index) const;
};

void to_json(nlohmann::json& j, const GridAxis& a);
void from_json(const nlohmann::json& j, GridAxis& a);
void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);

/// Family grid at full settings. `keep`, when non-zero, thins every
/// axis to that many settings per loop.
GridSpec build_grid(Family family, std::size_t n_loops, std::uint64_t seed, std::size_t keep = 0);

struct LoopInfo {
    std::string id;
    std::string path;  // relative to the dataset root
    int sample_rate = kDefaultSampleRate;
    std::optional<LoopRecipe> recipe;
};

struct ManifestEntry {
    std::string loop_id;
    std::string processed_id;
    std::string path;  // relative to the dataset root
    DrcParams labels;
    Family family = Family::DS1;
};

struct DatasetManifest {
    GridSpec grid;
    std::vector<LoopInfo> loops;
    std::vector<ManifestEntry> entries;
    std::uint64_t split_seed = 0;
    nlohmann::json config;  // resolved experiment config snapshot

    const LoopInfo& loop(const std::string& id) const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Desk-scale loop corpus: alternating drum_like / pluck_like recipes with
/// seeds derived from `seed`.
std::vector<LoopRecipe> default_loop_recipes(std::size_t n_loops, std::uint64_t seed,
                                             int sample_rate = kDefaultSampleRate,
                                             double duration_s = kDefaultClipSeconds);

/// Compresses every (loop, setting) pair and writes
/// <root>/<family>/<loop_id>/<entry_index>.wav plus <root>/<family>/manifest.json.
/// `recipes` may be empty (user-supplied loops). `jobs` caps worker threads.
DatasetManifest materialize(const GridSpec& grid, const std::vector<AudioClip>& loops,
                            const std::vector<LoopRecipe>& recipes,
                            const std::filesystem::path& root, unsigned jobs = 1);

/// Path of the manifest materialize() writes for a family.
std::filesystem::path manifest_path(const std::filesystem::path& root, Family family);

}  // namespace drc
