#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drcbench/errors.hpp"
#include "drcbench/experiment.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> family;
    std::optional<std::size_t> loops;
    std::optional<std::size_t> keep;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::optional<std::string> output;
    std::optional<std::string> source_dir;
    std::optional<std::string> variant;
    std::optional<std::string> representation;
    std::optional<std::size_t> frame;
    std::optional<std::size_t> epochs;
    std::optional<std::string> features;
    std::optional<std::size_t> splits;
    std::optional<std::size_t> trees;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON experiment config");
    cmd->add_option("--family", o.family, "DS1 DS2 DS3 DS4 DM1 DM2 D4P");
    cmd->add_option("--loops", o.loops, "number of synthetic loops");
    cmd->add_option("--keep", o.keep, "settings kept per axis and loop (0: all)");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("-j,--jobs", o.jobs, "worker threads");
    cmd->add_option("-o,--output", o.output, "output directory");
    cmd->add_option("--source-dir", o.source_dir, "folder of WAV loops to use instead of synthetic ones");
    cmd->add_option("--variant", o.variant, "model1_mel model1_spec_tuned model2_waveform model3_multikernel");
    cmd->add_option("--representation", o.representation, "mel spectrogram waveform");
    cmd->add_option("--frame", o.frame, "STFT frame length (hop = frame/2)");
    cmd->add_option("--epochs", o.epochs, "max training epochs");
    cmd->add_option("--features", o.features, "embedding or baseline");
    cmd->add_option("--splits", o.splits, "evaluation splits");
    cmd->add_option("--trees", o.trees, "trees per forest");
    cmd->add_flag("-q,--quiet", o.quiet, "no progress output");
}

drc::ExperimentConfig resolve(const Overrides& o) {
    using namespace drc;
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    nlohmann::json j = nlohmann::json::object();
    if (o.seed) j["seed"] = *o.seed;
    if (o.jobs) j["jobs"] = *o.jobs;
    if (o.output) j["output_dir"] = *o.output;
    if (o.features) j["features"] = *o.features;
    if (o.family) j["dataset"]["family"] = *o.family;
    if (o.loops) j["dataset"]["loops"] = *o.loops;
    if (o.keep) j["dataset"]["keep"] = *o.keep;
    if (o.source_dir) j["dataset"]["source_dir"] = *o.source_dir;
    if (o.variant) j["model"]["variant"] = *o.variant;
    if (o.representation) j["input"]["representation"] = *o.representation;
    if (o.frame) j["input"]["frame_len"] = *o.frame;
    if (o.epochs) j["train"]["max_epochs"] = *o.epochs;
    if (o.splits) j["eval"]["n_splits"] = *o.splits;
    if (o.trees) j["forest"]["n_trees"] = *o.trees;
    c = config_from_json(j, c);
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"drcbench: compressor parameter estimation benchmarks"};
    app.require_subcommand(1);
    Overrides o;
    std::string axis;
    std::vector<std::string> families;

    auto* gen = app.add_subcommand("generate", "synthesize loops and compress them over a family grid");
    auto* tr = app.add_subcommand("train", "train the siamese network on a generated dataset");
    auto* emb = app.add_subcommand("embed", "write embedding features for every dataset entry");
    auto* fit = app.add_subcommand("fit", "fit a random forest on all entries");
    auto* ev = app.add_subcommand("evaluate", "split-averaged forest MAE per parameter");
    auto* table = app.add_subcommand("reproduce-table", "run one sweep and emit an MAE table");
    for (auto* cmd : {gen, tr, emb, fit, ev, table}) add_common(cmd, o);
    table->add_option("--axis", axis, "frame-size representation kernel-shape features")->required();
    table->add_option("--families", families, "families to sweep (default DS3 DS4 DM2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const drc::Progress progress = [&](const std::string& msg) {
        if (!o.quiet) std::cerr << msg << '\n';
    };
    try {
        const drc::ExperimentConfig c = resolve(o);
        if (gen->parsed()) {
            drc::run_generate(c, progress);
        } else if (tr->parsed()) {
            drc::run_train(c, progress);
        } else if (emb->parsed()) {
            const auto X = drc::run_features(c, drc::FeatureSource::embedding, progress);
            std::cout << X.rows << " x " << X.cols << " -> " << c.feature_file(drc::FeatureSource::embedding).string()
                      << '\n';
        } else if (fit->parsed()) {
            std::cout << drc::run_fit(c, progress)["train_mae"].dump(2) << '\n';
        } else if (ev->parsed()) {
            std::cout << drc::format_report_table(drc::run_evaluate(c, progress));
        } else if (table->parsed()) {
            std::vector<drc::Family> fams;
            for (const auto& f : families) fams.push_back(drc::family_from_string(f));
            if (fams.empty()) fams = {drc::Family::DS3, drc::Family::DS4, drc::Family::DM2};
            const auto t = drc::run_table(c, drc::table_axis_from_string(axis), fams, progress);
            std::cout << drc::format_table(t);
        }
    } catch (const drc::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
