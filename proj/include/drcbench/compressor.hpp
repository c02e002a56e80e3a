#pragma once

#include <array>
#include <string>
#include <vector>

#include "drcbench/audio.hpp"
#include "json.hpp"

namespace drc {

/// The four compressor controls. Threshold is stored as a positive number of
/// dB below full scale; the gain computer works with -thd_db dBFS.
struct DrcParams {
    double thd_db = 37.5;
    double ratio = 2.0;
    double attack_ms = 5.0;
    double release_ms = 200.0;

    /// Throws DomainError naming every parameter outside its range.
    void validate() const;

    friend bool operator==(const DrcParams&, const DrcParams&) = default;
};

enum class Param { thd = 0, ratio = 1, attack = 2, release = 3 };
inline constexpr std::array<Param, 4> kAllParams = {Param::thd, Param::ratio, Param::attack,
                                                    Param::release};

double get(const DrcParams& p, Param which);
void set(DrcParams& p, Param which, double value);
std::string param_key(Param which);   // manifest key, e.g. "thd_db"
std::string param_label(Param which); // table label, e.g. "Thd"
std::string param_unit(Param which);  // "dB", "", "ms", "ms"
Param param_from_key(const std::string& key);

struct ParamRange {
    double lo;
    double hi;
};
/// Admissible domain of each control.
ParamRange param_domain(Param which);

void to_json(nlohmann::json& j, const DrcParams& p);
void from_json(const nlohmann::json& j, DrcParams& p);

/// Hard-knee static curve: min(0, T + (L - T)/R - L) with T = -thd_db.
double static_gain_db(double level_db, const DrcParams& params);

/// Feed-forward compressor: peak detector in dB, static curve, one-pole
/// smoothing of the gain in dB (attack while reduction deepens, release
/// otherwise), no make-up gain. Output has the same length and id suffix
/// is left to the caller.
AudioClip compress(const AudioClip& clip, const DrcParams& params);

/// Smoothed gain trajectory gs[n] in dB, exposed for tests and analysis.
std::vector<double> gain_trajectory_db(const AudioClip& clip, const DrcParams& params);

}  // namespace drc
