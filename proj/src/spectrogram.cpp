#include "drcbench/spectrogram.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>

#include "drcbench/errors.hpp"
#include "binio.hpp"

namespace drc {

using binio::get_u32;
using binio::put_u32;

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// RAII wrapper over a real-to-complex FFTW plan of fixed size.
class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_; }
    void run() { fftw_execute(plan_); }
    double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

std::string to_string(SpectrumScale scale) {
    switch (scale) {
        case SpectrumScale::linear_stft: return "spectrogram";
        case SpectrumScale::mel: return "mel";
        case SpectrumScale::feature_matrix: return "features";
    }
    return "?";
}

SpectrumScale spectrum_scale_from_string(const std::string& name) {
    if (name == "spectrogram" || name == "stft" || name == "linear_stft")
        return SpectrumScale::linear_stft;
    if (name == "mel" || name == "melgram") return SpectrumScale::mel;
    throw InvalidArgument("unknown representation '" + name + "'");
}

std::size_t frame_count(std::size_t length, std::size_t frame_len, std::size_t hop_len) {
    if (length < frame_len) return 0;
    return 1 + (length - frame_len) / hop_len;
}

std::vector<double> stft_linear_magnitude(const AudioClip& clip, std::size_t frame_len,
                                          std::size_t hop_len, std::size_t* frames_out) {
    if (!is_power_of_two(frame_len) || frame_len < 4)
        throw InvalidArgument("frame_len must be a power of two >= 4, got " +
                              std::to_string(frame_len));
    if (hop_len == 0) hop_len = frame_len / 2;
    if (clip.size() < frame_len)
        throw ShapeError("clip of " + std::to_string(clip.size()) +
                         " samples is shorter than one frame (" + std::to_string(frame_len) + ")");

    const std::size_t bins = frame_len / 2 + 1;
    const std::size_t frames = frame_count(clip.size(), frame_len, hop_len);
    std::vector<double> window(frame_len);
    for (std::size_t i = 0; i < frame_len; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / frame_len);

    std::vector<double> mag(bins * frames);
    RealFft fft(frame_len);
    for (std::size_t f = 0; f < frames; ++f) {
        const float* x = clip.samples.data() + f * hop_len;
        double* in = fft.input();
        for (std::size_t i = 0; i < frame_len; ++i) in[i] = window[i] * x[i];
        fft.run();
        for (std::size_t k = 0; k < bins; ++k) mag[k * frames + f] = fft.magnitude(k);
    }
    if (frames_out) *frames_out = frames;
    return mag;
}

Spectrogram stft_magnitude(const AudioClip& clip, std::size_t frame_len, std::size_t hop_len) {
    if (hop_len == 0) hop_len = frame_len / 2;
    Spectrogram s;
    const std::vector<double> mag = stft_linear_magnitude(clip, frame_len, hop_len, &s.frames);
    s.bins = frame_len / 2 + 1;
    s.frame_len = frame_len;
    s.hop_len = hop_len;
    s.scale = SpectrumScale::linear_stft;
    s.values.resize(mag.size());
    for (std::size_t i = 0; i < mag.size(); ++i)
        s.values[i] = static_cast<float>(std::log1p(kLogGamma * mag[i]));
    return s;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double MelFilterbank::triangle(std::size_t mel, double f) const {
    const double lo = edges_hz[mel], c = edges_hz[mel + 1], hi = edges_hz[mel + 2];
    if (f <= lo || f >= hi) return 0.0;
    return f <= c ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
}

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t frame_len, int sample_rate) {
    const std::size_t n_bins = frame_len / 2 + 1;
    if (n_mels == 0 || n_mels > n_bins)
        throw InvalidArgument("n_mels must be in [1, frame_len/2 + 1 = " + std::to_string(n_bins) +
                              "], got " + std::to_string(n_mels));
    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.n_bins = n_bins;
    fb.bin_hz = static_cast<double>(sample_rate) / frame_len;
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    fb.edges_hz.resize(n_mels + 2);
    for (std::size_t i = 0; i < n_mels + 2; ++i)
        fb.edges_hz[i] = mel_to_hz(mel_hi * i / (n_mels + 1));

    fb.weights.assign(n_mels * n_bins, 0.0);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = fb.edges_hz[m], c = fb.edges_hz[m + 1], hi = fb.edges_hz[m + 2];
        // Antiderivative of the triangle.
        auto area_to = [&](double x) {
            if (x <= lo) return 0.0;
            if (x <= c) return (x - lo) * (x - lo) / (2.0 * (c - lo));
            if (x <= hi) return (c - lo) / 2.0 + ((hi - c) * (hi - c) - (hi - x) * (hi - x)) / (2.0 * (hi - c));
            return (hi - lo) / 2.0;
        };
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double a = (k - 0.5) * fb.bin_hz;
            const double b = (k + 0.5) * fb.bin_hz;
            fb.weights[m * n_bins + k] = (area_to(b) - area_to(a)) / fb.bin_hz;
        }
    }
    return fb;
}

Spectrogram mel_spectrogram(const AudioClip& clip, std::size_t frame_len, std::size_t hop_len,
                            std::size_t n_mels) {
    if (hop_len == 0) hop_len = frame_len / 2;
    const MelFilterbank fb = mel_filterbank(n_mels, frame_len, clip.sample_rate);
    Spectrogram s;
    const std::vector<double> mag = stft_linear_magnitude(clip, frame_len, hop_len, &s.frames);
    s.bins = n_mels;
    s.frame_len = frame_len;
    s.hop_len = hop_len;
    s.scale = SpectrumScale::mel;
    s.values.assign(n_mels * s.frames, 0.0f);
    std::vector<double> acc(s.frames);
    for (std::size_t m = 0; m < n_mels; ++m) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < fb.n_bins; ++k) {
            const double w = fb.weight(m, k);
            if (w == 0.0) continue;
            const double* row = mag.data() + k * s.frames;
            for (std::size_t f = 0; f < s.frames; ++f) acc[f] += w * row[f] * row[f];
        }
        for (std::size_t f = 0; f < s.frames; ++f)
            s.values[m * s.frames + f] = static_cast<float>(std::log1p(kLogGamma * acc[f]));
    }
    return s;
}

void write_spectrogram(const Spectrogram& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("SPEC", 4);
    put_u32(out, static_cast<std::uint32_t>(spec.bins));
    put_u32(out, static_cast<std::uint32_t>(spec.frames));
    put_u32(out, static_cast<std::uint32_t>(spec.scale));
    for (float v : spec.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    if (!out) throw IoError("write failed: " + path.string());
}

Spectrogram read_spectrogram(const std::filesystem::path& path) {
    const std::vector<char> bytes = binio::slurp(path);
    if (bytes.size() < 16 || std::string(bytes.data(), 4) != "SPEC")
        throw FormatError(path.string() + ": missing SPEC header");
    Spectrogram s;
    s.bins = get_u32(bytes, 4);
    s.frames = get_u32(bytes, 8);
    const std::uint32_t scale = get_u32(bytes, 12);
    if (scale > 2) throw FormatError(path.string() + ": unknown scale " + std::to_string(scale));
    s.scale = static_cast<SpectrumScale>(scale);
    const std::size_t n = s.bins * s.frames;
    if (bytes.size() != 16 + 4 * n)
        throw FormatError(path.string() + ": payload size does not match header");
    s.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
    return s;
}

}  // namespace drc
