#include "drcbench/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "drcbench/errors.hpp"
#include "drcbench/parallel.hpp"

namespace drc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(FeatureSource f) { return f == FeatureSource::embedding ? "embedding" : "baseline"; }

FeatureSource feature_source_from_string(const std::string& name) {
    if (name == "embedding" || name == "embeddings") return FeatureSource::embedding;
    if (name == "baseline") return FeatureSource::baseline;
    throw InvalidArgument("unknown feature source '" + name + "'");
}

std::string to_string(TableAxis a) {
    switch (a) {
        case TableAxis::frame_size: return "frame-size";
        case TableAxis::representation: return "representation";
        case TableAxis::kernel_shape: return "kernel-shape";
        case TableAxis::features: return "features";
    }
    return "?";
}

TableAxis table_axis_from_string(const std::string& name) {
    for (TableAxis a : {TableAxis::frame_size, TableAxis::representation, TableAxis::kernel_shape, TableAxis::features})
        if (to_string(a) == name) return a;
    throw InvalidArgument("unknown table axis '" + name + "' (frame-size, representation, kernel-shape, features)");
}

ModelSpec ExperimentConfig::model_spec(std::size_t num_para) const {
    ModelSpec s = ModelSpec::defaults(variant, num_para, kernel_layout);
    s.width = width;
    s.embedding_dim = embedding_dim;
    return s;
}

fs::path ExperimentConfig::feature_file(FeatureSource f) const {
    return fs::path(output_dir) / "features" / (to_string(f) + ".spec");
}

void ExperimentConfig::validate() const {
    auto wrap = [](const char* section, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            const std::string msg = e.what();
            throw ConfigError(msg.rfind(section, 0) == 0 ? msg : std::string(section) + ": " + msg);
        }
    };
    if (dataset.loops < 2) throw ConfigError("dataset.loops: must be >= 2");
    if (dataset.sample_rate <= 0) throw ConfigError("dataset.sample_rate: must be > 0");
    if (!(dataset.duration_s > 0.0)) throw ConfigError("dataset.duration_s: must be > 0");
    if (dataset.duration_s * dataset.sample_rate < 1024.0)
        throw ConfigError("dataset.duration_s: clips need at least 1024 samples");
    if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
    if (jobs == 0) throw ConfigError("jobs: must be >= 1");
    wrap("input", [&] { input.validate(); });
    wrap("model", [&] {
        ModelSpec s = model_spec(1);
        s.validate();
        s.check_representation(input.representation);
    });
    wrap("train", [&] { train.validate(); });
    if (forest.n_trees < 1) throw ConfigError("forest.n_trees: must be >= 1");
    if (forest.min_samples_leaf < 1) throw ConfigError("forest.min_samples_leaf: must be >= 1");
    if (eval.n_splits < 1) throw ConfigError("eval.n_splits: must be >= 1");
    if (!(eval.test_fraction > 0.0 && eval.test_fraction < 1.0))
        throw ConfigError("eval.test_fraction: must be in (0, 1)");
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = {{"family", to_string(c.dataset.family)}, {"loops", c.dataset.loops},
                    {"keep", c.dataset.keep},                {"seed", c.dataset.seed},
                    {"sample_rate", c.dataset.sample_rate},  {"duration_s", c.dataset.duration_s},
                    {"source_dir", c.dataset.source_dir}};
    j["input"] = c.input;
    j["model"] = {{"variant", to_string(c.variant)},
                  {"width", c.width},
                  {"kernel_layout", to_string(c.kernel_layout)},
                  {"embedding_dim", c.embedding_dim}};
    j["train"] = c.train;
    j["forest"] = c.forest;
    j["eval"] = c.eval;
    j["features"] = to_string(c.features);
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["cache_dir"] = c.cache_dir;
    return j;
}

namespace {

// Reads the keys of one JSON object, reporting failures with their path.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_arithmetic_v<T>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            out = v.get<T>();
        } catch (const ConfigError&) {
            throw ConfigError(field(key) + ": expected " + expected<T>() + ", got " + v.dump());
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": expected " + expected<T>() + ", got " + v.dump());
        }
    }

    template <typename T, typename Parse>
    void read_enum(const char* key, T& out, Parse parse) {
        std::string name;
        read(key, name);
        if (!seen_.count(key)) return;
        try {
            out = parse(name);
        } catch (const InvalidArgument& e) {
            throw ConfigError(field(key) + ": " + e.what());
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    Fields section(const char* key) {
        seen_.insert(key);
        return Fields(j_.at(key), field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key().c_str()) + ": unknown field");
    }

private:
    template <typename T>
    static std::string expected() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
        else if constexpr (std::is_arithmetic_v<T>) return "a number";
        else return "a string";
    }
    std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }
    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
    Fields top(j, "");
    if (top.has("seed")) {
        top.read("seed", c.seed);
        c.dataset.seed = c.train.seed = c.forest.seed = c.eval.seed = c.seed;
    }
    top.read("output_dir", c.output_dir);
    top.read("jobs", c.jobs);
    top.read("cache_dir", c.cache_dir);
    top.read_enum("features", c.features, feature_source_from_string);
    if (top.has("dataset")) {
        Fields d = top.section("dataset");
        d.read_enum("family", c.dataset.family, family_from_string);
        d.read("loops", c.dataset.loops);
        d.read("keep", c.dataset.keep);
        d.read("seed", c.dataset.seed);
        d.read("sample_rate", c.dataset.sample_rate);
        d.read("duration_s", c.dataset.duration_s);
        d.read("source_dir", c.dataset.source_dir);
        d.finish();
    }
    if (top.has("input")) {
        Fields in = top.section("input");
        in.read_enum("representation", c.input.representation, representation_from_string);
        in.read("frame_len", c.input.frame_len);
        in.read("hop_len", c.input.hop_len);
        in.read("n_mels", c.input.n_mels);
        in.finish();
    }
    if (top.has("model")) {
        Fields m = top.section("model");
        m.read_enum("variant", c.variant, variant_from_string);
        m.read("width", c.width);
        m.read_enum("kernel_layout", c.kernel_layout, kernel_layout_from_string);
        m.read("embedding_dim", c.embedding_dim);
        m.finish();
    }
    if (top.has("train")) {
        Fields t = top.section("train");
        t.read("batch_size", c.train.batch_size);
        t.read("validation_fraction", c.train.validation_fraction);
        t.read("max_epochs", c.train.max_epochs);
        t.read("patience", c.train.patience);
        t.read("seed", c.train.seed);
        t.read("target_train_mse", c.train.target_train_mse);
        t.read("enforce_min_entries", c.train.enforce_min_entries);
        t.read("strict_determinism", c.train.strict_determinism);
        t.finish();
    }
    if (top.has("forest")) {
        Fields f = top.section("forest");
        f.read("n_trees", c.forest.n_trees);
        f.read("max_depth", c.forest.max_depth);
        f.read("min_samples_leaf", c.forest.min_samples_leaf);
        f.read("features_per_split", c.forest.features_per_split);
        f.read("bootstrap", c.forest.bootstrap);
        f.read("seed", c.forest.seed);
        f.finish();
    }
    if (top.has("eval")) {
        Fields e = top.section("eval");
        e.read("n_splits", c.eval.n_splits);
        e.read("test_fraction", c.eval.test_fraction);
        e.read("group_by_loop", c.eval.group_by_loop);
        e.read("seed", c.eval.seed);
        e.finish();
    }
    top.finish();
    c.forest.jobs = c.eval.jobs = c.jobs;
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void write_config_snapshot(const ExperimentConfig& c, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << config_to_json(c).dump(2) << '\n';
}

namespace {

void say(const Progress& p, const std::string& msg) {
    if (p) p(msg);
}

fs::path effective_cache(const ExperimentConfig& c) {
    if (!c.cache_dir.empty()) return c.cache_dir;
    if (const char* env = std::getenv("DRCBENCH_CACHE"); env && *env) return env;
    return {};
}

DatasetManifest require_manifest(const ExperimentConfig& c) {
    const fs::path p = c.manifest();
    if (!fs::exists(p)) throw IoError("missing dataset manifest " + p.string() + " (run generate first)");
    return read_manifest(p);
}

std::size_t clip_length(const DatasetManifest& m, const fs::path& root) {
    if (m.loops.empty()) throw DataError("manifest lists no loops");
    return read_wav(root / m.loops.front().path).samples.size();
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

}  // namespace

Matrix manifest_labels(const DatasetManifest& m) {
    const std::vector<Param> params = m.grid.varying();
    Matrix y(m.entries.size(), params.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        for (std::size_t p = 0; p < params.size(); ++p) y(i, p) = get(m.entries[i].labels, params[p]);
    return y;
}

std::vector<std::string> manifest_groups(const DatasetManifest& m) {
    std::vector<std::string> g;
    for (const auto& e : m.entries) g.push_back(e.loop_id);
    return g;
}

DatasetManifest run_generate(const ExperimentConfig& c, const Progress& progress) {
    c.validate();
    std::vector<AudioClip> clips;
    std::vector<LoopRecipe> recipes;
    if (!c.dataset.source_dir.empty()) {
        clips = load_wav_folder(c.dataset.source_dir);
        if (clips.size() < 2) throw DataError("dataset.source_dir holds fewer than two WAV files");
    } else {
        recipes = default_loop_recipes(c.dataset.loops, c.dataset.seed, c.dataset.sample_rate, c.dataset.duration_s);
        clips.resize(recipes.size());
        parallel_for(recipes.size(), c.jobs, [&](std::size_t i) { clips[i] = synthesize_loop(recipes[i]); });
    }
    const GridSpec grid = build_grid(c.dataset.family, clips.size(), c.dataset.seed, c.dataset.keep);
    say(progress, "generate: " + to_string(grid.family) + ", " + std::to_string(clips.size()) + " loops");
    DatasetManifest m = materialize(grid, clips, recipes, c.data_root(), c.jobs);
    m.split_seed = c.eval.seed;
    m.config = config_to_json(c);
    write_manifest(m, c.manifest());
    write_config_snapshot(c, c.data_root());
    say(progress, "generate: " + std::to_string(m.entries.size()) + " entries -> " + c.manifest().string());
    return m;
}

TrainResult run_train(const ExperimentConfig& c, const Progress& progress) {
    c.validate();
    const DatasetManifest m = require_manifest(c);
    const LabelScaler scaler = LabelScaler::for_grid(m.grid);
    say(progress, "train: preprocessing " + std::to_string(m.entries.size()) + " pairs");
    const std::vector<Pair> pairs = load_pairs(m, c.data_root(), c.input, scaler, c.jobs, effective_cache(c));
    const ad::Shape shape = c.input.shape_for(clip_length(m, c.data_root()));
    const ModelSpec spec = c.model_spec(scaler.params.size());
    SiameseModel<float> model(spec, shape, derive_seed(c.train.seed, 0x1417));
    say(progress, "train: " + to_string(spec.variant) + " input " + ad::shape_str(shape) + ", " +
                      std::to_string(model.params().numel()) + " parameters");
    const TrainResult result = train(model, pairs, c.train);
    for (const auto& row : result.log) {
        char line[128];
        std::snprintf(line, sizeof line, "train: epoch %zu train_mse %.5f val_mse %.5f", row.epoch, row.train_mse,
                      row.val_mse);
        say(progress, line);
    }

    const fs::path dir = c.checkpoint().parent_path();
    fs::create_directories(dir);
    ModelSidecar side{spec, c.input, shape, scaler.keys(), scaler.ranges, derive_seed(c.train.seed, 0x1417)};
    save_model(model, side, c.checkpoint());
    write_training_log(result.log, dir / "train_log.csv");
    write_json(dir / "train_summary.json", {{"best_epoch", result.best_epoch},
                                            {"best_val_mse", result.best_val_mse},
                                            {"epochs_run", result.log.size()},
                                            {"stop_reason", result.stop_reason},
                                            {"train_entries", result.train_indices.size()},
                                            {"val_entries", result.val_indices.size()},
                                            {"config", config_to_json(c)}});
    write_config_snapshot(c, dir);
    say(progress, "train: best epoch " + std::to_string(result.best_epoch) + " (" + result.stop_reason + ")");
    return result;
}

Matrix run_features(const ExperimentConfig& c, FeatureSource source, const Progress& progress) {
    c.validate();
    const DatasetManifest m = require_manifest(c);
    Matrix X;
    if (source == FeatureSource::embedding) {
        if (!fs::exists(c.checkpoint()))
            throw IoError("checkpoint not found: " + c.checkpoint().string() + " (run train first)");
        auto [model, side] = load_model(c.checkpoint());
        if (json(side.input) != json(c.input))
            throw InvalidArgument("checkpoint was trained on " + json(side.input).dump() +
                                  " but the config preprocesses with " + json(c.input).dump());
        const LabelScaler scaler = LabelScaler::for_grid(m.grid);
        const std::vector<Pair> pairs = load_pairs(m, c.data_root(), c.input, scaler, c.jobs, effective_cache(c));
        say(progress, "embed: " + std::to_string(pairs.size()) + " pairs");
        const auto emb = embed_pairs(model, pairs);
        X = Matrix(emb.size(), model.spec().embedding_dim);
        for (std::size_t i = 0; i < emb.size(); ++i) std::copy(emb[i].begin(), emb[i].end(), X.data.begin() + i * X.cols);
    } else {
        say(progress, "baseline features: " + std::to_string(m.entries.size()) + " pairs");
        std::vector<std::vector<double>> rows(m.entries.size());
        std::map<std::string, AudioClip> loops;
        for (const auto& l : m.loops) loops.emplace(l.id, read_wav(c.data_root() / l.path));
        parallel_for(m.entries.size(), c.jobs, [&](std::size_t i) {
            const auto& e = m.entries[i];
            rows[i] = baseline_features(loops.at(e.loop_id), read_wav(c.data_root() / e.path));
        });
        X = Matrix(rows.size(), kBaselineFeatureCount);
        for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), X.data.begin() + i * X.cols);
    }
    fs::create_directories(c.feature_file(source).parent_path());
    write_feature_matrix(X, c.feature_file(source));
    write_config_snapshot(c, c.feature_file(source).parent_path());
    return X;
}

json run_fit(const ExperimentConfig& c, const Progress& progress) {
    const Matrix X = run_features(c, c.features, progress);
    const DatasetManifest m = require_manifest(c);
    const Matrix Y = manifest_labels(m);
    const Forest forest = Forest::fit(X, Y, c.forest);
    const Matrix pred = forest.predict(X);
    json summary = {{"features", to_string(c.features)}, {"entries", X.rows}, {"config", config_to_json(c)}};
    const std::vector<Param> params = m.grid.varying();
    for (std::size_t p = 0; p < params.size(); ++p) {
        double e = 0.0;
        for (std::size_t r = 0; r < X.rows; ++r) e += std::abs(pred(r, p) - Y(r, p));
        summary["train_mae"][param_key(params[p])] = e / static_cast<double>(X.rows);
    }
    const fs::path dir = fs::path(c.output_dir) / "forest";
    fs::create_directories(dir);
    json fj = forest.to_json();
    fj["labels"] = json::array();
    for (Param p : params) fj["labels"].push_back(param_key(p));
    write_json(dir / ("forest_" + to_string(c.features) + ".json"), fj);
    write_json(dir / ("fit_summary_" + to_string(c.features) + ".json"), summary);
    write_config_snapshot(c, dir);
    say(progress, "fit: forest on " + std::to_string(X.rows) + " entries -> " + dir.string());
    return summary;
}

EvalReport run_evaluate(const ExperimentConfig& c, const Progress& progress) {
    c.validate();
    if (c.features == FeatureSource::embedding && !fs::exists(c.checkpoint()))
        throw IoError("checkpoint not found: " + c.checkpoint().string() + " (run train first)");
    const Matrix X = run_features(c, c.features, progress);
    const DatasetManifest m = require_manifest(c);
    say(progress, "evaluate: " + std::to_string(c.eval.n_splits) + " splits");
    EvalReport r = evaluate(X, manifest_labels(m), m.grid.varying(), manifest_groups(m), c.forest, c.eval,
                            to_string(c.features));
    r.config = config_to_json(c);
    fs::create_directories(c.report_dir());
    write_report(r, c.report_dir() / ("eval_" + to_string(c.features)));
    write_config_snapshot(c, c.report_dir());
    return r;
}

std::vector<TableColumn> table_columns(const ExperimentConfig& base, TableAxis axis) {
    std::vector<TableColumn> cols;
    auto add = [&](std::string label, auto&& edit) {
        ExperimentConfig c = base;
        edit(c);
        cols.push_back({std::move(label), std::move(c)});
    };
    switch (axis) {
        case TableAxis::frame_size:
            for (std::size_t f : {512, 256, 128})
                add(std::to_string(f), [&](ExperimentConfig& c) {
                    c.variant = Variant::model1_spec_tuned;
                    c.input = InputSpec{Representation::spectrogram, f, f / 2, base.input.n_mels};
                });
            break;
        case TableAxis::representation:
            add("Melgram", [&](ExperimentConfig& c) {
                c.variant = Variant::model1_mel;
                c.input.representation = Representation::mel;
                c.input.n_mels = std::min(c.input.n_mels, c.input.frame_len / 2 + 1);
            });
            add("Spectrogram", [&](ExperimentConfig& c) {
                c.variant = Variant::model1_spec_tuned;
                c.input.representation = Representation::spectrogram;
            });
            break;
        case TableAxis::kernel_shape:
            for (auto [k, label] : {std::pair{KernelLayout::k5_3x3, "5(3*3)"},
                                    std::pair{KernelLayout::k4_3x3_1_1x3, "4(3*3)+1(1*3)"},
                                    std::pair{KernelLayout::k3_3x3_2_1x3, "3(3*3)+2(1*3)"}})
                add(label, [&](ExperimentConfig& c) { c.kernel_layout = k; });
            break;
        case TableAxis::features:
            add("Embedding", [&](ExperimentConfig& c) { c.features = FeatureSource::embedding; });
            add("Baseline", [&](ExperimentConfig& c) { c.features = FeatureSource::baseline; });
            break;
    }
    return cols;
}

namespace {

std::string slug(const std::string& s) {
    std::string out;
    for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    return out;
}

// Expected direction of each sweep, checked per row.
void annotate(TableResult& t) {
    auto row_trend = [&](const TableRow& r) -> std::string {
        const auto& v = r.mae;
        switch (t.axis) {
            case TableAxis::frame_size: {
                const bool mono = v.size() == 3 && v[2] < v[1] && v[1] < v[0];
                const bool ends = v.size() == 3 && v[2] < v[0];
                return mono ? "holds (MAE falls monotonically with smaller frames)"
                            : ends ? "partly holds (128 beats 512, not monotone)" : "does not hold";
            }
            case TableAxis::representation:
                return v.size() == 2 && v[1] < v[0] ? "holds (spectrogram better)" : "does not hold (melgram better or equal)";
            case TableAxis::kernel_shape: {
                const auto best = std::min_element(v.begin(), v.end()) - v.begin();
                return "best column: " + t.columns[static_cast<std::size_t>(best)];
            }
            case TableAxis::features:
                return v.size() == 2 && v[0] < v[1] ? "embedding better" : "baseline better or equal";
        }
        return "";
    };
    switch (t.axis) {
        case TableAxis::frame_size: t.notes.push_back("reference direction: smaller frames give lower MAE"); break;
        case TableAxis::representation: t.notes.push_back("reference direction: spectrogram beats melgram"); break;
        case TableAxis::kernel_shape:
            t.notes.push_back("reference: 1x3 layers helped release time; no clear direction otherwise");
            break;
        case TableAxis::features: t.notes.push_back("reference: learned embeddings compared with handcrafted features"); break;
    }
    for (const auto& r : t.rows) t.notes.push_back(r.label + ": " + row_trend(r));
}

}  // namespace

TableResult run_table(const ExperimentConfig& base, TableAxis axis, const std::vector<Family>& families,
                      const Progress& progress) {
    TableResult t;
    t.axis = axis;
    const std::vector<TableColumn> cols = table_columns(base, axis);
    for (const auto& c : cols) t.columns.push_back(c.label);
    const fs::path root = fs::path(base.output_dir) / ("table_" + to_string(axis));

    for (Family fam : families) {
        std::vector<EvalReport> reports;
        for (const auto& col : cols) {
            ExperimentConfig c = col.config;
            c.dataset.family = fam;
            c.output_dir = (root / to_string(fam) / slug(col.label)).string();
            say(progress, "table " + to_string(axis) + ": " + to_string(fam) + " / " + col.label);
            run_generate(c, progress);
            if (c.features == FeatureSource::embedding) run_train(c, progress);
            reports.push_back(run_evaluate(c, progress));
        }
        const auto& scores = reports.front().scores;
        std::string joint;
        if (scores.size() > 1) {
            for (std::size_t p = 0; p < scores.size(); ++p) joint += (p ? "/" : "") + param_label(scores[p].param);
        }
        for (std::size_t p = 0; p < scores.size(); ++p) {
            TableRow row;
            const Param param = scores[p].param;
            row.label = scores.size() > 1 ? "Joint (" + joint + ") " + param_label(param) : param_label(param);
            row.label += " [" + to_string(fam) + "]";
            row.unit = param_unit(param);
            for (const auto& r : reports) row.mae.push_back(r.score(param).mae);
            t.rows.push_back(row);
        }
    }
    annotate(t);

    fs::create_directories(fs::path(base.output_dir) / "tables");
    const fs::path stem = fs::path(base.output_dir) / "tables" / to_string(axis);
    std::ofstream(stem.string() + ".txt") << format_table(t);
    std::ofstream(stem.string() + ".csv") << format_table_csv(t);
    nlohmann::json j = {{"axis", to_string(axis)}, {"columns", t.columns}, {"notes", t.notes}};
    for (const auto& r : t.rows) j["rows"].push_back({{"label", r.label}, {"unit", r.unit}, {"mae", r.mae}});
    std::ofstream(stem.string() + ".json") << j.dump(2) << '\n';
    write_config_snapshot(base, fs::path(base.output_dir) / "tables");
    return t;
}

std::string format_table(const TableResult& t) {
    std::size_t w0 = 4;
    for (const auto& r : t.rows) w0 = std::max(w0, r.label.size() + r.unit.size() + 3);
    w0 += 2;
    std::size_t wc = 8;
    for (const auto& c : t.columns) wc = std::max(wc, c.size() + 2);
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), ("Para \\ " + to_string(t.axis)).c_str());
    out << buf;
    for (const auto& c : t.columns) {
        std::snprintf(buf, sizeof buf, "%*s", static_cast<int>(wc), c.c_str());
        out << buf;
    }
    out << '\n' << std::string(w0 + wc * t.columns.size(), '-') << '\n';
    for (const auto& r : t.rows) {
        const std::string label = r.unit.empty() ? r.label : r.label + " (" + r.unit + ")";
        std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), label.c_str());
        out << buf;
        const auto best = std::min_element(r.mae.begin(), r.mae.end()) - r.mae.begin();
        for (std::size_t i = 0; i < r.mae.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.3f%s", r.mae[i], static_cast<std::ptrdiff_t>(i) == best ? "*" : " ");
            std::string cell = buf;
            std::snprintf(buf, sizeof buf, "%*s", static_cast<int>(wc), cell.c_str());
            out << buf;
        }
        out << '\n';
    }
    out << "\n* lowest MAE in the row\n";
    for (const auto& n : t.notes) out << "trend: " << n << '\n';
    return out.str();
}

std::string format_table_csv(const TableResult& t) {
    std::ostringstream out;
    out << "row,unit";
    for (const auto& c : t.columns) out << ',' << c;
    out << '\n';
    for (const auto& r : t.rows) {
        out << '"' << r.label << "\"," << r.unit;
        for (double v : r.mae) {
            char b[32];
            std::snprintf(b, sizeof b, "%.6f", v);
            out << ',' << b;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace drc
