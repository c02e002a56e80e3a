#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace drc {

inline constexpr int kDefaultSampleRate = 16000;
inline constexpr double kDefaultClipSeconds = 2.0;

/// 10^(db/20).
double db_to_linear(double level_db);

/// 20*log10(x). Non-positive input maps to -inf; callers guard with an epsilon.
double linear_to_db(double linear);

/// Mono sample buffer. Samples are nominally in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kDefaultSampleRate;
    std::string id;

    std::size_t size() const noexcept { return samples.size(); }
    double duration_s() const noexcept {
        return static_cast<double>(samples.size()) / sample_rate;
    }
    float peak() const noexcept;
    /// Throws InvalidArgument when empty, non-finite or sample_rate <= 0.
    void validate() const;
};

enum class LoopKind { drum_like, pluck_like };

std::string to_string(LoopKind kind);
LoopKind loop_kind_from_string(const std::string& name);

/// Deterministic recipe for a synthetic loop.
struct LoopRecipe {
    LoopKind kind = LoopKind::drum_like;
    double tempo_bpm = 120.0;
    double duration_s = kDefaultClipSeconds;
    std::uint64_t seed = 0;
    int sample_rate = kDefaultSampleRate;
    /// Grid positions per beat. The downbeat is always struck; the others
    /// are struck with probability 1/2 (drum_like only).
    int subdivision = 2;
};

void to_json(nlohmann::json& j, const LoopRecipe& r);
void from_json(const nlohmann::json& j, LoopRecipe& r);

/// Onset sample positions the generator will place for this recipe.
std::vector<std::size_t> loop_onsets(const LoopRecipe& recipe);

/// Renders the recipe. Peak is normalized to -1 dBFS.
AudioClip synthesize_loop(const LoopRecipe& recipe);

/// Counts onsets with a short-time energy detector. Independent of the
/// synthesizer; used to cross-check it.
std::size_t count_energy_onsets(const AudioClip& clip, double min_gap_s = 0.05);

enum class WavEncoding { pcm16, float32 };

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::float32);

/// All *.wav files of a folder, sorted by file name, ids set to the stem.
std::vector<AudioClip> load_wav_folder(const std::filesystem::path& dir);

/// {id, recipe, sample_rate} metadata written next to each synthesized clip.
void write_clip_sidecar(const AudioClip& clip, const LoopRecipe* recipe,
                        const std::filesystem::path& path);

}  // namespace drc
