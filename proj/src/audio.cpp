#include "drcbench/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <limits>

#include "drcbench/errors.hpp"
#include "drcbench/random.hpp"

namespace drc {

double db_to_linear(double level_db) { return std::pow(10.0, level_db / 20.0); }

double linear_to_db(double linear) {
    if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(linear);
}

float AudioClip::peak() const noexcept {
    float p = 0.0f;
    for (float s : samples) p = std::max(p, std::abs(s));
    return p;
}

void AudioClip::validate() const {
    if (samples.empty()) throw InvalidArgument("audio clip '" + id + "' is empty");
    if (sample_rate <= 0)
        throw InvalidArgument("audio clip '" + id + "' has non-positive sample_rate");
    for (float s : samples)
        if (!std::isfinite(s))
            throw InvalidArgument("audio clip '" + id + "' contains non-finite samples");
}

std::string to_string(LoopKind kind) {
    return kind == LoopKind::drum_like ? "drum_like" : "pluck_like";
}

LoopKind loop_kind_from_string(const std::string& name) {
    if (name == "drum_like") return LoopKind::drum_like;
    if (name == "pluck_like") return LoopKind::pluck_like;
    throw InvalidArgument("unknown loop kind '" + name + "'");
}

void to_json(nlohmann::json& j, const LoopRecipe& r) {
    j = {{"kind", to_string(r.kind)},         {"tempo_bpm", r.tempo_bpm},
         {"duration_s", r.duration_s},       {"seed", r.seed},
         {"sample_rate", r.sample_rate},     {"subdivision", r.subdivision}};
}

void from_json(const nlohmann::json& j, LoopRecipe& r) {
    r.kind = loop_kind_from_string(j.at("kind").get<std::string>());
    r.tempo_bpm = j.at("tempo_bpm").get<double>();
    r.duration_s = j.at("duration_s").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.sample_rate = j.value("sample_rate", kDefaultSampleRate);
    r.subdivision = j.value("subdivision", 2);
}

namespace {

void check_recipe(const LoopRecipe& r) {
    if (!(r.duration_s > 0.0)) throw InvalidArgument("invalid recipe: duration_s must be > 0");
    if (!(r.tempo_bpm > 0.0)) throw InvalidArgument("invalid recipe: tempo_bpm must be > 0");
    if (r.sample_rate <= 0) throw InvalidArgument("invalid recipe: sample_rate must be > 0");
    if (r.subdivision < 1) throw InvalidArgument("invalid recipe: subdivision must be >= 1");
    if (r.duration_s * r.sample_rate < 1024.0)
        throw InvalidArgument("invalid recipe: duration_s * sample_rate must be >= 1024");
}

std::size_t recipe_length(const LoopRecipe& r) {
    return static_cast<std::size_t>(std::llround(r.duration_s * r.sample_rate));
}

struct Hit {
    std::size_t start;
    bool accent;  // downbeat
};

std::vector<Hit> place_hits(const LoopRecipe& r) {
    const std::size_t n = recipe_length(r);
    const int per_beat = r.kind == LoopKind::drum_like ? r.subdivision : 1;
    const double step = 60.0 / r.tempo_bpm * r.sample_rate / per_beat;
    Rng coin(derive_seed(r.seed, 1));
    std::vector<Hit> hits;
    for (std::size_t k = 0;; ++k) {
        const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(k) * step));
        if (pos >= n) break;
        const bool downbeat = k % static_cast<std::size_t>(per_beat) == 0;
        if (downbeat || coin.uniform() < 0.5) hits.push_back({pos, downbeat});
    }
    return hits;
}

void render_drum(const LoopRecipe& r, std::span<double> out) {
    Rng rng(derive_seed(r.seed, 2));
    const double fs = r.sample_rate;
    for (const Hit& hit : place_hits(r)) {
        const double amp = hit.accent ? rng.uniform(0.7, 1.0) : rng.uniform(0.3, 0.6);
        const double tau = (hit.accent ? rng.uniform(0.06, 0.12) : rng.uniform(0.015, 0.035)) * fs;
        // Accents get a one-pole lowpass for a darker, kick-like body.
        const double lp = hit.accent ? 0.9 : 0.0;
        double state = 0.0;
        for (std::size_t i = hit.start; i < out.size(); ++i) {
            const double t = static_cast<double>(i - hit.start);
            const double env = amp * std::exp(-t / tau);
            if (env < 1e-5) break;
            const double noise = 2.0 * rng.uniform() - 1.0;
            state = lp * state + (1.0 - lp) * noise;
            out[i] += env * (hit.accent ? state * 3.0 : noise);
        }
    }
}

void render_pluck(const LoopRecipe& r, std::span<double> out) {
    static constexpr double kScale[] = {110.0,  123.47, 146.83, 164.81, 196.0,
                                        220.0,  246.94, 293.66, 329.63, 392.0};
    Rng rng(derive_seed(r.seed, 2));
    const double fs = r.sample_rate;
    const double attack = 0.002 * fs;
    for (const Hit& hit : place_hits(r)) {
        const double f0 = kScale[rng.below(std::size(kScale))];
        const double tau0 = rng.uniform(0.2, 0.5) * fs;
        const double amp = rng.uniform(0.6, 1.0);
        for (int k = 1; k <= 6; ++k) {
            const double f = f0 * k;
            if (f >= 0.45 * fs) break;
            const double a = amp / k * rng.uniform(0.7, 1.0);
            const double tau = tau0 / std::pow(static_cast<double>(k), 0.7);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double w = 2.0 * std::numbers::pi * f / fs;
            for (std::size_t i = hit.start; i < out.size(); ++i) {
                const double t = static_cast<double>(i - hit.start);
                const double env = a * std::exp(-t / tau) * std::min(1.0, t / attack);
                if (t > attack && env < 1e-6) break;
                out[i] += env * std::sin(w * t + phase);
            }
        }
    }
}

}  // namespace

std::vector<std::size_t> loop_onsets(const LoopRecipe& recipe) {
    check_recipe(recipe);
    std::vector<std::size_t> onsets;
    for (const Hit& h : place_hits(recipe)) onsets.push_back(h.start);
    return onsets;
}

AudioClip synthesize_loop(const LoopRecipe& recipe) {
    check_recipe(recipe);
    std::vector<double> mix(recipe_length(recipe), 0.0);
    if (recipe.kind == LoopKind::drum_like)
        render_drum(recipe, mix);
    else
        render_pluck(recipe, mix);

    double peak = 0.0;
    for (double s : mix) peak = std::max(peak, std::abs(s));
    if (!(peak > 0.0)) throw InvalidArgument("invalid recipe: rendered silence");
    const double gain = db_to_linear(-1.0) / peak;

    AudioClip clip;
    clip.sample_rate = recipe.sample_rate;
    clip.id = to_string(recipe.kind) + "_" + std::to_string(recipe.seed);
    clip.samples.resize(mix.size());
    std::transform(mix.begin(), mix.end(), clip.samples.begin(),
                   [gain](double s) { return static_cast<float>(s * gain); });
    return clip;
}

std::size_t count_energy_onsets(const AudioClip& clip, double min_gap_s) {
    const auto frame = static_cast<std::size_t>(std::max(8.0, std::round(0.01 * clip.sample_rate)));
    const std::size_t hop = frame / 2;
    if (clip.size() < frame) return 0;
    std::vector<double> energy;
    for (std::size_t start = 0; start + frame <= clip.size(); start += hop) {
        double e = 0.0;
        for (std::size_t i = start; i < start + frame; ++i) e += double(clip.samples[i]) * clip.samples[i];
        energy.push_back(e / frame);
    }
    const double floor = *std::max_element(energy.begin(), energy.end()) * 1e-4;
    const auto gap = static_cast<std::size_t>(std::ceil(min_gap_s * clip.sample_rate / hop));

    std::size_t count = 0;
    std::size_t last = 0;
    bool any = false;
    for (std::size_t i = 0; i < energy.size(); ++i) {
        // Compare against the non-overlapping frame just before this one.
        const double before = i >= 2 ? energy[i - 2] : 0.0;
        const bool rise = energy[i] > floor && energy[i] > 4.0 * before + 1e-20;
        if (rise && (!any || i - last >= gap)) {
            ++count;
            last = i;
            any = true;
        }
    }
    return count;
}

std::vector<AudioClip> load_wav_folder(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<AudioClip> clips;
    for (const auto& f : files) {
        AudioClip c = read_wav(f);
        c.id = f.stem().string();
        clips.push_back(std::move(c));
    }
    return clips;
}

void write_clip_sidecar(const AudioClip& clip, const LoopRecipe* recipe,
                        const std::filesystem::path& path) {
    nlohmann::json j = {{"id", clip.id}, {"sample_rate", clip.sample_rate}};
    j["recipe"] = recipe ? nlohmann::json(*recipe) : nlohmann::json(nullptr);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace drc
