#include "drcbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "drcbench/errors.hpp"
#include "drcbench/parallel.hpp"
#include "drcbench/random.hpp"
#include "drcbench/spectrogram.hpp"

namespace drc {

namespace {
constexpr double kEps = 1e-12;

double db(double x) { return 20.0 * std::log10(x + kEps); }
}  // namespace

double report_range(Param p) {
    switch (p) {
        case Param::thd: return 49.0;
        case Param::ratio: return 19.0;
        case Param::attack: return 99.0;
        case Param::release: return 999.0;
    }
    return 1.0;
}

double crest_factor_db(const std::vector<float>& samples) {
    if (samples.empty()) return 0.0;
    double peak = 0.0, sq = 0.0;
    for (float s : samples) {
        peak = std::max(peak, std::abs(static_cast<double>(s)));
        sq += static_cast<double>(s) * s;
    }
    const double rms = std::sqrt(sq / static_cast<double>(samples.size()));
    return 20.0 * std::log10((peak + kEps) / (rms + kEps));
}

std::vector<double> clip_features(const AudioClip& clip) {
    if (clip.samples.size() < 4) throw InvalidArgument("clip '" + clip.id + "' too short for features");
    const double fs = clip.sample_rate;
    const std::size_t n = clip.samples.size();

    double sq = 0.0;
    for (float s : clip.samples) sq += static_cast<double>(s) * s;
    const double rms_db = db(std::sqrt(sq / static_cast<double>(n)));
    const double crest = crest_factor_db(clip.samples);

    std::size_t frame = 512;
    while (frame > n) frame /= 2;
    std::size_t frames = 0;
    const std::vector<double> mag = stft_linear_magnitude(clip, frame, frame / 2, &frames);
    const std::size_t bins = frame / 2 + 1;
    std::vector<double> centroids;
    for (std::size_t t = 0; t < frames; ++t) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double m = mag[k * frames + t];
            num += m * (static_cast<double>(k) * fs / static_cast<double>(frame));
            den += m;
        }
        centroids.push_back(den > kEps ? num / den : 0.0);
    }
    const double c_mean = std::accumulate(centroids.begin(), centroids.end(), 0.0) / centroids.size();
    double c_var = 0.0;
    for (double c : centroids) c_var += (c - c_mean) * (c - c_mean);
    const double c_std = std::sqrt(c_var / centroids.size());

    // RMS envelope in 10 ms frames, 5 ms hop.
    const std::size_t ef = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(0.01 * fs)));
    const std::size_t eh = ef / 2;
    std::vector<double> env;
    for (std::size_t s = 0; s + ef <= n; s += eh) {
        double e = 0.0;
        for (std::size_t i = s; i < s + ef; ++i) e += static_cast<double>(clip.samples[i]) * clip.samples[i];
        env.push_back(std::sqrt(e / ef));
    }
    if (env.empty()) env.push_back(std::sqrt(sq / static_cast<double>(n)));
    const double hop_s = static_cast<double>(eh) / fs;

    const std::size_t peak = static_cast<std::size_t>(std::max_element(env.begin(), env.end()) - env.begin());
    double attack_s = hop_s;
    if (env[peak] > kEps) {
        std::size_t start = peak;
        while (start > 0 && env[start - 1] >= 0.2 * env[peak]) --start;
        std::size_t reach = start;
        while (reach < peak && env[reach] < 0.9 * env[peak]) ++reach;
        attack_s = std::max(hop_s, static_cast<double>(reach - start) * hop_s);
    }
    const double lat = std::log10(attack_s);

    const double mean_env = std::accumulate(env.begin(), env.end(), 0.0) / env.size();
    std::vector<double> dev(env.size());
    for (std::size_t i = 0; i < env.size(); ++i) dev[i] = env[i] - mean_env;
    double r0 = 0.0;
    for (double d : dev) r0 += d * d;
    double decay_s = 0.0;
    if (r0 > kEps) {
        std::size_t lag = 1;
        for (; lag < dev.size(); ++lag) {
            double r = 0.0;
            for (std::size_t i = 0; i + lag < dev.size(); ++i) r += dev[i] * dev[i + lag];
            if (r < r0 / std::exp(1.0)) break;
        }
        decay_s = static_cast<double>(lag) * hop_s;
    }
    return {rms_db, crest, c_mean, c_std, lat, decay_s};
}

std::vector<std::string> baseline_feature_names() {
    const char* base[] = {"rms_db", "crest_db", "centroid_mean_hz", "centroid_std_hz", "log_attack_time",
                          "env_decay_s"};
    std::vector<std::string> names;
    for (const char* prefix : {"unprocessed.", "processed.", "delta."})
        for (const char* b : base) names.push_back(std::string(prefix) + b);
    return names;
}

std::vector<double> baseline_features(const AudioClip& unprocessed, const AudioClip& processed) {
    if (unprocessed.samples.size() != processed.samples.size())
        throw InvalidArgument("baseline features need equal-length clips (" +
                              std::to_string(unprocessed.samples.size()) + " vs " +
                              std::to_string(processed.samples.size()) + ")");
    const std::vector<double> a = clip_features(unprocessed);
    const std::vector<double> b = clip_features(processed);
    std::vector<double> out = a;
    out.insert(out.end(), b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(b[i] - a[i]);
    return out;
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
    j = {{"n_splits", c.n_splits},
         {"test_fraction", c.test_fraction},
         {"group_by_loop", c.group_by_loop},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
    c = EvalConfig{};
    c.n_splits = j.value("n_splits", c.n_splits);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.group_by_loop = j.value("group_by_loop", c.group_by_loop);
    c.seed = j.value("seed", c.seed);
}

const ParamScore& EvalReport::score(Param p) const {
    for (const auto& s : scores)
        if (s.param == p) return s;
    throw InvalidArgument("report has no score for " + param_key(p));
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    j = {{"feature_source", r.feature_source},
         {"n_entries", r.n_entries},
         {"n_loops", r.n_loops},
         {"n_features", r.n_features},
         {"protocol", r.eval},
         {"forest", r.forest},
         {"aggregation", "mean over splits of per-split test MAE"}};
    j["scores"] = nlohmann::json::array();
    for (const auto& s : r.scores)
        j["scores"].push_back({{"param", param_key(s.param)},
                               {"mae", s.mae},
                               {"mae_std", s.mae_std},
                               {"range", report_range(s.param)},
                               {"pct_of_range", s.pct_of_range},
                               {"mean_predictor_mae", s.mean_predictor_mae}});
    j["config"] = r.config;
}

std::vector<std::size_t> test_split(const std::vector<std::string>& groups, const EvalConfig& config,
                                    std::size_t split) {
    Rng rng(derive_seed(config.seed, 0x5000 + split));
    std::vector<std::size_t> test;
    if (config.group_by_loop) {
        const std::set<std::string> unique(groups.begin(), groups.end());
        std::vector<std::string> ids(unique.begin(), unique.end());
        rng.shuffle(ids);
        std::size_t n_test = static_cast<std::size_t>(std::lround(config.test_fraction * ids.size()));
        n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
        std::set<std::string> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        for (std::size_t i = 0; i < groups.size(); ++i)
            if (chosen.count(groups[i])) test.push_back(i);
    } else {
        std::vector<std::size_t> idx(groups.size());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::size_t n_test = static_cast<std::size_t>(std::lround(config.test_fraction * idx.size()));
        n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::sort(test.begin(), test.end());
    }
    return test;
}

EvalReport evaluate(const Matrix& features, const Matrix& labels, const std::vector<Param>& params,
                    const std::vector<std::string>& groups, const ForestConfig& forest, const EvalConfig& config,
                    const std::string& feature_source) {
    if (features.rows != labels.rows || groups.size() != features.rows)
        throw DataError("features, labels and loop ids disagree on the number of entries");
    if (labels.cols != params.size()) throw DataError("label columns do not match the parameter list");
    if (config.n_splits == 0) throw InvalidArgument("eval.n_splits must be > 0");
    if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0))
        throw InvalidArgument("eval.test_fraction must be in (0, 1)");
    const std::size_t n_loops = std::set<std::string>(groups.begin(), groups.end()).size();
    if (config.group_by_loop && n_loops < 5)
        throw ProtocolError("grouped 80/20 splitting needs at least 5 loops, got " + std::to_string(n_loops));
    if (features.rows < 5) throw ProtocolError("evaluation needs at least 5 entries");

    const std::size_t P = params.size();
    std::vector<std::vector<double>> mae(config.n_splits, std::vector<double>(P));
    std::vector<std::vector<double>> base(config.n_splits, std::vector<double>(P));
    ForestConfig fc = forest;
    fc.jobs = 1;
    parallel_for(config.n_splits, config.jobs, [&](std::size_t s) {
        const std::vector<std::size_t> test = test_split(groups, config, s);
        std::vector<std::size_t> train;
        for (std::size_t i = 0, t = 0; i < features.rows; ++i) {
            if (t < test.size() && test[t] == i) {
                ++t;
                continue;
            }
            train.push_back(i);
        }
        ForestConfig split_cfg = fc;
        split_cfg.seed = derive_seed(forest.seed, s);
        const Matrix Ytr = labels.select_rows(train);
        const Forest f = Forest::fit(features.select_rows(train), Ytr, split_cfg);
        const Matrix pred = f.predict(features.select_rows(test));
        for (std::size_t p = 0; p < P; ++p) {
            double mean = 0.0;
            for (std::size_t r = 0; r < Ytr.rows; ++r) mean += Ytr(r, p);
            mean /= static_cast<double>(Ytr.rows);
            double e = 0.0, b = 0.0;
            for (std::size_t r = 0; r < test.size(); ++r) {
                e += std::abs(pred(r, p) - labels(test[r], p));
                b += std::abs(mean - labels(test[r], p));
            }
            mae[s][p] = e / static_cast<double>(test.size());
            base[s][p] = b / static_cast<double>(test.size());
        }
    });

    EvalReport r;
    r.feature_source = feature_source;
    r.n_entries = features.rows;
    r.n_loops = n_loops;
    r.n_features = features.cols;
    r.eval = config;
    r.forest = forest;
    for (std::size_t p = 0; p < P; ++p) {
        ParamScore sc;
        sc.param = params[p];
        double sum = 0.0, bsum = 0.0;
        for (std::size_t s = 0; s < config.n_splits; ++s) {
            sum += mae[s][p];
            bsum += base[s][p];
        }
        sc.mae = sum / config.n_splits;
        sc.mean_predictor_mae = bsum / config.n_splits;
        double var = 0.0;
        for (std::size_t s = 0; s < config.n_splits; ++s) var += (mae[s][p] - sc.mae) * (mae[s][p] - sc.mae);
        sc.mae_std = std::sqrt(var / config.n_splits);
        sc.pct_of_range = 100.0 * sc.mae / report_range(params[p]);
        r.scores.push_back(sc);
    }
    return r;
}

namespace {

std::string fmt(const char* f, double v) {
    char b[64];
    std::snprintf(b, sizeof b, f, v);
    return b;
}

std::string unit_suffix(Param p) {
    const std::string u = param_unit(p);
    return u.empty() ? "" : u;
}

}  // namespace

std::string format_report_table(const EvalReport& r) {
    std::ostringstream out;
    out << "features: " << r.feature_source << "  entries: " << r.n_entries << "  loops: " << r.n_loops
        << "  splits: " << r.eval.n_splits << (r.eval.group_by_loop ? " (grouped by loop)" : " (per entry)") << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %16s %10s %18s\n", "Para", "MAE", "% range", "mean-predictor");
    out << line;
    for (const auto& s : r.scores) {
        const std::string mae = fmt("%.3f", s.mae) + unit_suffix(s.param);
        std::snprintf(line, sizeof line, "%-10s %16s %9.2f%% %18s\n", param_label(s.param).c_str(), mae.c_str(),
                      s.pct_of_range, (fmt("%.3f", s.mean_predictor_mae) + unit_suffix(s.param)).c_str());
        out << line;
    }
    return out.str();
}

std::string format_report_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "param,mae,unit,pct_of_range,mae_std,mean_predictor_mae,n_splits,grouped\n";
    for (const auto& s : r.scores)
        out << param_key(s.param) << ',' << fmt("%.6f", s.mae) << ',' << param_unit(s.param) << ','
            << fmt("%.4f", s.pct_of_range) << ',' << fmt("%.6f", s.mae_std) << ','
            << fmt("%.6f", s.mean_predictor_mae) << ',' << r.eval.n_splits << ',' << (r.eval.group_by_loop ? 1 : 0)
            << '\n';
    return out.str();
}

void write_report(const EvalReport& r, const std::filesystem::path& stem) {
    auto put = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        out << text;
    };
    put(stem.string() + ".json", nlohmann::json(r).dump(2) + "\n");
    put(stem.string() + ".txt", format_report_table(r));
    put(stem.string() + ".csv", format_report_csv(r));
}

void write_feature_matrix(const Matrix& m, const std::filesystem::path& path) {
    Spectrogram s;
    s.bins = m.rows;
    s.frames = m.cols;
    s.scale = SpectrumScale::feature_matrix;
    s.values.assign(m.data.begin(), m.data.end());
    write_spectrogram(s, path);
}

Matrix read_feature_matrix(const std::filesystem::path& path) {
    const Spectrogram s = read_spectrogram(path);
    if (s.scale != SpectrumScale::feature_matrix) throw FormatError(path.string() + ": not a feature matrix");
    Matrix m(s.bins, s.frames);
    std::copy(s.values.begin(), s.values.end(), m.data.begin());
    return m;
}

}  // namespace drc
