#include "drcbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "drcbench/errors.hpp"
#include "drcbench/random.hpp"
#include "drcbench/parallel.hpp"

namespace drc {

namespace {

constexpr const char* kFamilyNames[] = {"DS1", "DS2", "DS3", "DS4", "DM1", "DM2", "D4P"};

double tidy(double v) { return std::round(v * 1e6) / 1e6; }

auto label_key(const DrcParams& p) {
    return std::make_tuple(p.thd_db, p.ratio, p.attack_ms, p.release_ms);
}

}  // namespace

std::string to_string(Family f) { return kFamilyNames[static_cast<int>(f)]; }

Family family_from_string(const std::string& name) {
    for (int i = 0; i < 7; ++i)
        if (name == kFamilyNames[i]) return static_cast<Family>(i);
    throw InvalidArgument("unknown dataset family '" + name + "'");
}

double GridAxis::fine_value(std::size_t j) const { return tidy(start + fine_step * static_cast<double>(j)); }

ParamRange GridAxis::label_range() const {
    const double lo = std::max(fine_value(0), param_domain(param).lo);
    return {lo, fine_value(fine_count - 1)};
}

std::vector<double> GridSpec::axis_values(std::size_t axis, std::size_t loop_index) const {
    const GridAxis& a = axes.at(axis);
    const std::size_t stride = a.stride();
    const std::size_t offset = loop_index % stride;  // wraps once every stride loops
    std::vector<std::size_t> picks(a.settings_per_file);
    for (std::size_t k = 0; k < picks.size(); ++k) picks[k] = k;
    if (a.keep > 0 && a.keep < a.settings_per_file) {
        picks.resize(a.keep);
        const double span = static_cast<double>(a.settings_per_file - 1);
        for (std::size_t k = 0; k < a.keep; ++k)
            picks[k] = a.keep == 1 ? 0
                                   : static_cast<std::size_t>(std::lround(span * k / (a.keep - 1)));
    }
    const double floor = param_domain(a.param).lo;
    std::vector<double> values;
    for (std::size_t k : picks) {
        const double v = std::max(floor, a.fine_value(offset + stride * k));
        if (values.empty() || values.back() != v) values.push_back(v);
    }
    return values;
}

std::size_t GridSpec::clamped_values(std::size_t loop_index) const {
    std::size_t n = 0;
    for (std::size_t ai = 0; ai < axes.size(); ++ai) {
        const GridAxis& a = axes[ai];
        const std::size_t offset = loop_index % a.stride();
        for (std::size_t k = 0; k < a.settings_per_file; ++k)
            if (a.fine_value(offset + a.stride() * k) < param_domain(a.param).lo) ++n;
    }
    return n;
}

std::vector<DrcParams> GridSpec::loop_settings(std::size_t loop_index) const {
    std::vector<std::vector<double>> values;
    for (std::size_t a = 0; a < axes.size(); ++a) values.push_back(axis_values(a, loop_index));
    std::vector<DrcParams> out{defaults};
    for (std::size_t a = 0; a < axes.size(); ++a) {
        std::vector<DrcParams> next;
        for (const DrcParams& base : out)
            for (double v : values[a]) {
                DrcParams p = base;
                set(p, axes[a].param, v);
                next.push_back(p);
            }
        out = std::move(next);
    }
    return out;
}

std::vector<Param> GridSpec::varying() const {
    std::vector<Param> v;
    for (const auto& a : axes) v.push_back(a.param);
    return v;
}

GridSpec build_grid(Family family, std::size_t n_loops, std::uint64_t seed, std::size_t keep) {
    if (n_loops < 2) throw InvalidArgument("n_loops must be >= 2");
    GridSpec g;
    g.family = family;
    g.n_loops = n_loops;
    g.seed = seed;
    auto axis = [keep](Param p, double start, double step, std::size_t count, std::size_t per_file) {
        return GridAxis{p, start, step, count, per_file, keep};
    };
    switch (family) {
        case Family::DS1: g.axes = {axis(Param::thd, 0.0, 1.0, 50, 50)}; break;
        case Family::DS2: g.axes = {axis(Param::ratio, 0.0, 0.4, 50, 50)}; break;
        case Family::DS3: g.axes = {axis(Param::attack, 1.0, 2.0, 50, 50)}; break;
        case Family::DS4: g.axes = {axis(Param::release, 10.0, 20.0, 50, 50)}; break;
        case Family::DM1:
            g.axes = {axis(Param::thd, 10.0, 0.6, 64, 8), axis(Param::ratio, 1.0, 0.3, 64, 8)};
            break;
        case Family::DM2:
            g.axes = {axis(Param::attack, 1.0, 1.5, 64, 8), axis(Param::release, 10.0, 15.0, 64, 8)};
            break;
        case Family::D4P:
            g.axes = {axis(Param::thd, 10.0, 1.0, 40, 5), axis(Param::ratio, 1.28, 0.48, 40, 5),
                      axis(Param::attack, 1.0, 2.5, 40, 5), axis(Param::release, 10.0, 25.0, 40, 5)};
            break;
    }
    return g;
}

void to_json(nlohmann::json& j, const GridAxis& a) {
    j = {{"param", param_key(a.param)},
         {"start", a.start},
         {"fine_step", a.fine_step},
         {"fine_count", a.fine_count},
         {"settings_per_file", a.settings_per_file},
         {"per_file_offset_step", a.per_file_offset_step()},
         {"keep", a.keep}};
}

void from_json(const nlohmann::json& j, GridAxis& a) {
    a.param = param_from_key(j.at("param").get<std::string>());
    a.start = j.at("start").get<double>();
    a.fine_step = j.at("fine_step").get<double>();
    a.fine_count = j.at("fine_count").get<std::size_t>();
    a.settings_per_file = j.at("settings_per_file").get<std::size_t>();
    a.keep = j.value("keep", std::size_t{0});
}

void to_json(nlohmann::json& j, const GridSpec& g) {
    j = {{"family", to_string(g.family)}, {"axes", g.axes},         {"n_loops", g.n_loops},
         {"seed", g.seed},                {"defaults", g.defaults}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
    g.family = family_from_string(j.at("family").get<std::string>());
    g.axes = j.at("axes").get<std::vector<GridAxis>>();
    g.n_loops = j.at("n_loops").get<std::size_t>();
    g.seed = j.at("seed").get<std::uint64_t>();
    g.defaults = j.at("defaults").get<DrcParams>();
}

const LoopInfo& DatasetManifest::loop(const std::string& id) const {
    for (const auto& l : loops)
        if (l.id == id) return l;
    throw DataError("manifest has no loop '" + id + "'");
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    nlohmann::json loops = nlohmann::json::array();
    for (const auto& l : m.loops) {
        nlohmann::json e = {{"id", l.id}, {"path", l.path}, {"sample_rate", l.sample_rate}};
        e["recipe"] = l.recipe ? nlohmann::json(*l.recipe) : nlohmann::json(nullptr);
        loops.push_back(std::move(e));
    }
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries)
        entries.push_back({{"unprocessed_clip_id", e.loop_id},
                           {"processed_clip_id", e.processed_id},
                           {"path", e.path},
                           {"labels", e.labels},
                           {"family", to_string(e.family)}});
    nlohmann::json clamped = nlohmann::json::array();
    for (std::size_t i = 0; i < m.loops.size(); ++i) clamped.push_back(m.grid.clamped_values(i));
    j = {{"grid", m.grid},       {"loops", loops},   {"entries", entries},
         {"split_seed", m.split_seed}, {"clamped_settings_per_loop", clamped},
         {"config", m.config}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.grid = j.at("grid").get<GridSpec>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    m.config = j.value("config", nlohmann::json::object());
    m.loops.clear();
    for (const auto& l : j.at("loops")) {
        LoopInfo info;
        info.id = l.at("id").get<std::string>();
        info.path = l.at("path").get<std::string>();
        info.sample_rate = l.at("sample_rate").get<int>();
        if (!l.at("recipe").is_null()) info.recipe = l.at("recipe").get<LoopRecipe>();
        m.loops.push_back(std::move(info));
    }
    m.entries.clear();
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.loop_id = e.at("unprocessed_clip_id").get<std::string>();
        me.processed_id = e.at("processed_clip_id").get<std::string>();
        me.path = e.at("path").get<std::string>();
        me.labels = e.at("labels").get<DrcParams>();
        me.family = family_from_string(e.at("family").get<std::string>());
        m.entries.push_back(std::move(me));
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    try {
        return nlohmann::json::parse(in).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << nlohmann::json(m).dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LoopRecipe> default_loop_recipes(std::size_t n_loops, std::uint64_t seed,
                                             int sample_rate, double duration_s) {
    std::vector<LoopRecipe> recipes;
    for (std::size_t i = 0; i < n_loops; ++i) {
        LoopRecipe r;
        r.kind = i % 2 == 0 ? LoopKind::drum_like : LoopKind::pluck_like;
        // Tempi spread over 90..135 bpm so loops differ in density.
        r.tempo_bpm = 90.0 + 15.0 * static_cast<double>((i / 2) % 4);
        r.duration_s = duration_s;
        r.sample_rate = sample_rate;
        r.seed = derive_seed(seed, i);
        recipes.push_back(r);
    }
    return recipes;
}

std::filesystem::path manifest_path(const std::filesystem::path& root, Family family) {
    return root / to_string(family) / "manifest.json";
}

DatasetManifest materialize(const GridSpec& grid, const std::vector<AudioClip>& loops,
                            const std::vector<LoopRecipe>& recipes,
                            const std::filesystem::path& root, unsigned jobs) {
    if (loops.size() != grid.n_loops)
        throw InvalidArgument("grid expects " + std::to_string(grid.n_loops) + " loops, got " +
                              std::to_string(loops.size()));
    if (!recipes.empty() && recipes.size() != loops.size())
        throw InvalidArgument("recipes must be empty or match the loop count");

    const std::filesystem::path family_dir = root / to_string(grid.family);
    DatasetManifest m;
    m.grid = grid;
    m.split_seed = grid.seed;

    struct Job {
        std::size_t loop;
        std::size_t index;
        DrcParams params;
    };
    std::vector<Job> work;
    for (std::size_t li = 0; li < loops.size(); ++li) {
        const AudioClip& clip = loops[li];
        clip.validate();
        const std::filesystem::path dir = family_dir / clip.id;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

        LoopInfo info;
        info.id = clip.id;
        info.path = (std::filesystem::path(to_string(grid.family)) / clip.id / "unprocessed.wav").generic_string();
        info.sample_rate = clip.sample_rate;
        if (!recipes.empty()) info.recipe = recipes[li];
        write_wav(clip, root / info.path);
        write_clip_sidecar(clip, info.recipe ? &*info.recipe : nullptr, dir / "unprocessed.json");
        m.loops.push_back(info);

        std::vector<DrcParams> settings = grid.loop_settings(li);
        std::sort(settings.begin(), settings.end(),
                  [](const DrcParams& a, const DrcParams& b) { return label_key(a) < label_key(b); });
        for (std::size_t k = 0; k < settings.size(); ++k) work.push_back({li, k, settings[k]});
    }

    m.entries.resize(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t w) {
        const Job& job = work[w];
        AudioClip out = compress(loops[job.loop], job.params);
        out.id = loops[job.loop].id + "_" + std::to_string(job.index);
        const std::string rel = (std::filesystem::path(to_string(grid.family)) / loops[job.loop].id /
                                 (std::to_string(job.index) + ".wav")).generic_string();
        write_wav(out, root / rel);
        m.entries[w] = {loops[job.loop].id, out.id, rel, job.params, grid.family};
    });

    std::sort(m.entries.begin(), m.entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
        return std::make_pair(a.loop_id, label_key(a.labels)) <
               std::make_pair(b.loop_id, label_key(b.labels));
    });
    write_manifest(m, manifest_path(root, grid.family));
    return m;
}

}  // namespace drc
