#include "drcbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "drcbench/errors.hpp"
#include "drcbench/optim.hpp"
#include "drcbench/parallel.hpp"
#include "drcbench/spectrogram.hpp"

namespace drc {

using ad::Mode;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
    if (batch_size == 0) throw InvalidArgument("train.batch_size must be > 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw InvalidArgument("train.validation_fraction must be in (0, 1)");
    if (max_epochs == 0) throw InvalidArgument("train.max_epochs must be > 0");
    if (target_train_mse < 0.0) throw InvalidArgument("train.target_train_mse must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"validation_fraction", c.validation_fraction},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"seed", c.seed},
         {"target_train_mse", c.target_train_mse},
         {"enforce_min_entries", c.enforce_min_entries},
         {"strict_determinism", c.strict_determinism}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    c.batch_size = j.value("batch_size", c.batch_size);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.target_train_mse = j.value("target_train_mse", c.target_train_mse);
    c.enforce_min_entries = j.value("enforce_min_entries", c.enforce_min_entries);
    c.strict_determinism = j.value("strict_determinism", c.strict_determinism);
}

LabelScaler LabelScaler::for_grid(const GridSpec& grid) {
    LabelScaler s;
    for (const GridAxis& a : grid.axes) {
        s.params.push_back(a.param);
        s.ranges.push_back(a.label_range());
    }
    return s;
}

std::vector<float> LabelScaler::normalize(const DrcParams& labels) const {
    std::vector<float> y;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double span = ranges[i].hi - ranges[i].lo;
        const double v = span > 0 ? (get(labels, params[i]) - ranges[i].lo) / span : 0.0;
        y.push_back(static_cast<float>(v));
    }
    return y;
}

std::vector<double> LabelScaler::denormalize(const std::vector<float>& y, std::size_t* clamped) const {
    if (y.size() != params.size()) throw ShapeError("label vector length does not match the scaler");
    std::vector<double> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double v = ranges[i].lo + static_cast<double>(y[i]) * (ranges[i].hi - ranges[i].lo);
        const double c = std::clamp(v, ranges[i].lo, ranges[i].hi);
        if (c != v && clamped) ++*clamped;
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> LabelScaler::keys() const {
    std::vector<std::string> k;
    for (Param p : params) k.push_back(param_key(p));
    return k;
}

namespace {

std::uint64_t fnv_str(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<float> cached_input(const std::filesystem::path& root, const std::string& rel, const InputSpec& input,
                                const std::filesystem::path& cache_dir) {
    const std::filesystem::path wav = root / rel;
    if (!std::filesystem::exists(wav)) throw IoError("missing audio file " + wav.string());
    std::filesystem::path cached;
    if (!cache_dir.empty()) {
        const std::string key = std::filesystem::absolute(wav).string() + "|" +
                                std::to_string(std::filesystem::file_size(wav)) + "|" +
                                nlohmann::json(input).dump();
        char name[32];
        std::snprintf(name, sizeof name, "%016llx.spec", static_cast<unsigned long long>(fnv_str(key)));
        cached = cache_dir / name;
        if (std::filesystem::exists(cached)) return read_spectrogram(cached).values;
    }
    std::vector<float> values = preprocess(read_wav(wav), input);
    if (!cached.empty()) {
        Spectrogram s;
        s.values = values;
        s.bins = 1;
        s.frames = values.size();
        s.scale = SpectrumScale::feature_matrix;
        const std::filesystem::path tmp = cached.string() + ".tmp" + std::to_string(fnv_str(rel));
        write_spectrogram(s, tmp);
        std::filesystem::rename(tmp, cached);
    }
    return values;
}

}  // namespace

std::vector<Pair> load_pairs(const DatasetManifest& manifest, const std::filesystem::path& root,
                             const InputSpec& input, const LabelScaler& scaler, unsigned jobs,
                             const std::filesystem::path& cache_dir) {
    input.validate();
    if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);
    std::map<std::string, std::size_t> loop_slot;
    for (const auto& l : manifest.loops) loop_slot.emplace(l.id, loop_slot.size());
    std::vector<std::vector<float>> loop_inputs(manifest.loops.size());
    parallel_for(manifest.loops.size(), jobs, [&](std::size_t i) {
        loop_inputs[i] = cached_input(root, manifest.loops[i].path, input, cache_dir);
    });
    std::vector<Pair> pairs(manifest.entries.size());
    parallel_for(manifest.entries.size(), jobs, [&](std::size_t i) {
        const ManifestEntry& e = manifest.entries[i];
        auto it = loop_slot.find(e.loop_id);
        if (it == loop_slot.end()) throw DataError("entry " + e.processed_id + " refers to unknown loop " + e.loop_id);
        Pair& p = pairs[i];
        p.unprocessed = loop_inputs[it->second];
        p.processed = cached_input(root, e.path, input, cache_dir);
        if (p.processed.size() != p.unprocessed.size())
            throw DataError("entry " + e.processed_id + " differs in length from its unprocessed loop");
        p.target = scaler.normalize(e.labels);
        p.loop_id = e.loop_id;
    });
    return pairs;
}

void split_train_val(std::size_t n, double validation_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val) {
    if (n < 2) throw InvalidArgument("need at least two entries to split train/validation");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x5a11));
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
}

namespace {

struct Batch {
    Var<float> a, b, y;
};

Batch make_batch(const std::vector<Pair>& data, const std::vector<std::size_t>& idx, std::size_t from,
                 std::size_t to, const Shape& input_shape, std::size_t num_para) {
    const std::size_t n = to - from;
    Shape shape{n};
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    const std::size_t per = ad::shape_numel(input_shape);
    Tensor<float> a(shape), b(shape), y(Shape{n, num_para});
    for (std::size_t k = 0; k < n; ++k) {
        const Pair& p = data[idx[from + k]];
        if (p.unprocessed.size() != per || p.processed.size() != per)
            throw ShapeError("pair input has " + std::to_string(p.processed.size()) + " values, model expects " +
                             ad::shape_str(input_shape));
        if (p.target.size() != num_para)
            throw ShapeError("pair has " + std::to_string(p.target.size()) + " labels, model predicts " +
                             std::to_string(num_para));
        std::copy(p.unprocessed.begin(), p.unprocessed.end(), a.ptr() + k * per);
        std::copy(p.processed.begin(), p.processed.end(), b.ptr() + k * per);
        std::copy(p.target.begin(), p.target.end(), y.ptr() + k * num_para);
    }
    return {Var<float>::leaf(std::move(a)), Var<float>::leaf(std::move(b)), Var<float>::leaf(std::move(y))};
}

double evaluate_mse(SiameseModel<float>& model, const std::vector<Pair>& data, const std::vector<std::size_t>& idx,
                    std::size_t batch_size) {
    ad::NoGradGuard guard;
    double sum = 0.0;
    for (std::size_t from = 0; from < idx.size(); from += batch_size) {
        const std::size_t to = std::min(idx.size(), from + batch_size);
        Batch bt = make_batch(data, idx, from, to, model.input_shape(), model.spec().num_para);
        Var<float> pred = model.forward(bt.a, bt.b, Mode::inference, nullptr);
        sum += ad::mse_loss(pred, bt.y).value()[0] * static_cast<double>(to - from);
    }
    return sum / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(SiameseModel<float>& model, const std::vector<Pair>& data, const TrainConfig& config,
                  const StepHook& hook) {
    config.validate();
    if (config.enforce_min_entries && data.size() < 10 * config.batch_size)
        throw InvalidArgument("training needs at least " + std::to_string(10 * config.batch_size) +
                              " entries (10 x batch_size), manifest has " + std::to_string(data.size()));
    TrainResult result;
    split_train_val(data.size(), config.validation_fraction, config.seed, result.train_indices, result.val_indices);

    ad::Adadelta<float> opt(model.params());
    Rng dropout_rng(derive_seed(config.seed, 0xd209));
    double best = std::numeric_limits<double>::infinity();
    std::vector<NamedTensor> best_params = model.params().export_tensors();
    std::size_t since_best = 0;
    std::size_t step = 0;
    result.stop_reason = "max_epochs";

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        EpochLog row;
        row.epoch = epoch;
        try {
            std::vector<std::size_t> order = result.train_indices;
            Rng shuffle(derive_seed(config.seed, 0x10000 + epoch));
            shuffle.shuffle(order);
            double sum = 0.0;
            for (std::size_t from = 0; from < order.size(); from += config.batch_size) {
                const std::size_t to = std::min(order.size(), from + config.batch_size);
                Batch bt = make_batch(data, order, from, to, model.input_shape(), model.spec().num_para);
                Var<float> pred = model.forward(bt.a, bt.b, Mode::training, &dropout_rng);
                Var<float> loss = ad::mse_loss(pred, bt.y);
                const double l = loss.value()[0];
                if (!std::isfinite(l)) throw NumericError("training loss is not finite");
                sum += l * static_cast<double>(to - from);
                ad::backward(loss);
                opt.step();
                model.params().zero_grad();
                if (hook) hook(epoch, ++step);
            }
            row.train_mse = sum / static_cast<double>(order.size());
            row.val_mse = evaluate_mse(model, data, result.val_indices, config.batch_size);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        result.log.push_back(row);

        if (row.val_mse < best) {
            best = row.val_mse;
            result.best_epoch = epoch;
            best_params = model.params().export_tensors();
            since_best = 0;
        } else {
            ++since_best;
        }
        if (config.target_train_mse > 0.0 && row.train_mse < config.target_train_mse) {
            result.stop_reason = "target_train_mse";
            break;
        }
        if (config.patience > 0 && since_best >= config.patience) {
            result.stop_reason = "early_stop";
            break;
        }
    }
    result.best_val_mse = best;
    model.params().import_tensors(best_params);
    return result;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_mse,val_mse\n";
    char line[96];
    for (const auto& r : log) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", r.epoch, r.train_mse, r.val_mse);
        out << line;
    }
}

std::vector<std::vector<float>> embed_pairs(SiameseModel<float>& model, const std::vector<Pair>& data,
                                            std::size_t batch_size) {
    ad::NoGradGuard guard;
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::vector<float>> out;
    const std::size_t dim = model.spec().embedding_dim;
    for (std::size_t from = 0; from < idx.size(); from += batch_size) {
        const std::size_t to = std::min(idx.size(), from + batch_size);
        Batch bt = make_batch(data, idx, from, to, model.input_shape(), model.spec().num_para);
        Var<float> e = model.merge(bt.a, bt.b, Mode::inference, nullptr);
        for (std::size_t k = 0; k < to - from; ++k)
            out.emplace_back(e.value().ptr() + k * dim, e.value().ptr() + (k + 1) * dim);
    }
    return out;
}

}  // namespace drc
