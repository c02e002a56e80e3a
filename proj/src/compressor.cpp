#include "drcbench/compressor.hpp"

#include <cmath>

#include "drcbench/errors.hpp"

namespace drc {

namespace {
constexpr double kLevelEps = 1e-12;
}

double get(const DrcParams& p, Param which) {
    switch (which) {
        case Param::thd: return p.thd_db;
        case Param::ratio: return p.ratio;
        case Param::attack: return p.attack_ms;
        case Param::release: return p.release_ms;
    }
    return 0.0;
}

void set(DrcParams& p, Param which, double value) {
    switch (which) {
        case Param::thd: p.thd_db = value; break;
        case Param::ratio: p.ratio = value; break;
        case Param::attack: p.attack_ms = value; break;
        case Param::release: p.release_ms = value; break;
    }
}

std::string param_key(Param which) {
    static const char* keys[] = {"thd_db", "ratio", "attack_ms", "release_ms"};
    return keys[static_cast<int>(which)];
}

std::string param_label(Param which) {
    static const char* labels[] = {"Thd", "Ratio", "Attack", "Release"};
    return labels[static_cast<int>(which)];
}

std::string param_unit(Param which) {
    static const char* units[] = {"dB", "", "ms", "ms"};
    return units[static_cast<int>(which)];
}

Param param_from_key(const std::string& key) {
    for (Param p : kAllParams)
        if (param_key(p) == key) return p;
    throw InvalidArgument("unknown parameter key '" + key + "'");
}

ParamRange param_domain(Param which) {
    switch (which) {
        case Param::thd: return {0.0, 60.0};
        case Param::ratio: return {1.0, 20.0};
        case Param::attack: return {0.5, 100.0};
        case Param::release: return {5.0, 1000.0};
    }
    return {0.0, 0.0};
}

void DrcParams::validate() const {
    std::string bad;
    for (Param p : kAllParams) {
        const double v = get(*this, p);
        const ParamRange r = param_domain(p);
        if (!(v >= r.lo && v <= r.hi)) {
            if (!bad.empty()) bad += ", ";
            bad += param_key(p) + "=" + std::to_string(v) + " not in [" + std::to_string(r.lo) +
                   ", " + std::to_string(r.hi) + "]";
        }
    }
    if (!bad.empty()) throw DomainError("compressor parameter out of range: " + bad);
}

void to_json(nlohmann::json& j, const DrcParams& p) {
    j = {{"thd_db", p.thd_db},
         {"ratio", p.ratio},
         {"attack_ms", p.attack_ms},
         {"release_ms", p.release_ms}};
}

void from_json(const nlohmann::json& j, DrcParams& p) {
    p.thd_db = j.at("thd_db").get<double>();
    p.ratio = j.at("ratio").get<double>();
    p.attack_ms = j.at("attack_ms").get<double>();
    p.release_ms = j.at("release_ms").get<double>();
}

double static_gain_db(double level_db, const DrcParams& params) {
    const double threshold = -params.thd_db;
    const double g = threshold + (level_db - threshold) / params.ratio - level_db;
    return std::min(0.0, g);
}

std::vector<double> gain_trajectory_db(const AudioClip& clip, const DrcParams& params) {
    clip.validate();
    params.validate();
    const double fs = clip.sample_rate;
    const double alpha_attack = std::exp(-1.0 / (fs * params.attack_ms * 1e-3));
    const double alpha_release = std::exp(-1.0 / (fs * params.release_ms * 1e-3));

    std::vector<double> gs(clip.size());
    double state = 0.0;  // no reduction before the first sample
    for (std::size_t n = 0; n < clip.size(); ++n) {
        const double level = 20.0 * std::log10(std::abs(double(clip.samples[n])) + kLevelEps);
        const double g = static_gain_db(level, params);
        const double alpha = g < state ? alpha_attack : alpha_release;
        state = alpha * state + (1.0 - alpha) * g;
        gs[n] = state;
    }
    return gs;
}

AudioClip compress(const AudioClip& clip, const DrcParams& params) {
    const std::vector<double> gs = gain_trajectory_db(clip, params);
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.id = clip.id;
    out.samples.resize(clip.size());
    for (std::size_t n = 0; n < clip.size(); ++n)
        out.samples[n] = static_cast<float>(clip.samples[n] * std::pow(10.0, gs[n] / 20.0));
    return out;
}

}  // namespace drc
