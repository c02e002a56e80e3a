#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drcbench/audio.hpp"

namespace drc {

/// Log compression applied to every spectrogram cell: log(1 + gamma * m).
inline constexpr double kLogGamma = 1e4;

enum class SpectrumScale : std::uint32_t { linear_stft = 0, mel = 1, feature_matrix = 2 };

std::string to_string(SpectrumScale scale);
SpectrumScale spectrum_scale_from_string(const std::string& name);

/// [bins x frames], row-major (one row per frequency bin).
struct Spectrogram {
    std::vector<float> values;
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::size_t frame_len = 0;
    std::size_t hop_len = 0;
    SpectrumScale scale = SpectrumScale::linear_stft;

    float at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
};

/// 1 + floor((length - frame_len) / hop_len); frames lie fully inside the clip.
std::size_t frame_count(std::size_t length, std::size_t frame_len, std::size_t hop_len);

/// Hann-windowed magnitude spectra, [frame_len/2 + 1 x frames], no compression.
/// hop_len == 0 selects frame_len / 2.
std::vector<double> stft_linear_magnitude(const AudioClip& clip, std::size_t frame_len,
                                          std::size_t hop_len, std::size_t* frames_out = nullptr);

Spectrogram stft_magnitude(const AudioClip& clip, std::size_t frame_len, std::size_t hop_len = 0);

/// Triangular filters on the HTK mel scale (mel = 2595 log10(1 + f/700)),
/// n_mels + 2 edges evenly spaced in mel between 0 and fs/2. Each weight is
/// the triangle's mean over the bin's frequency interval, so narrow low bands
/// never come out empty and a flat spectrum yields (triangle area / bin width).
struct MelFilterbank {
    std::size_t n_mels = 0;
    std::size_t n_bins = 0;
    double bin_hz = 0.0;
    std::vector<double> edges_hz;  // n_mels + 2
    std::vector<double> weights;   // [n_mels x n_bins]

    double weight(std::size_t mel, std::size_t bin) const { return weights[mel * n_bins + bin]; }
    /// Continuous triangle value at f (unit peak at the centre edge).
    double triangle(std::size_t mel, double f) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t frame_len, int sample_rate);

Spectrogram mel_spectrogram(const AudioClip& clip, std::size_t frame_len, std::size_t hop_len,
                            std::size_t n_mels);

/// Flat float32 cache: "SPEC", u32 bins, u32 frames, u32 scale, then
/// little-endian float32 row-major payload.
void write_spectrogram(const Spectrogram& spec, const std::filesystem::path& path);
Spectrogram read_spectrogram(const std::filesystem::path& path);

}  // namespace drc
