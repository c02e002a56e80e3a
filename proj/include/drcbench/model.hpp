#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drcbench/audio.hpp"
#include "drcbench/compressor.hpp"
#include "drcbench/params.hpp"
#include "json.hpp"

namespace drc {

enum class Variant { model1_mel, model1_spec_tuned, model2_waveform, model3_multikernel };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

enum class Representation { mel, spectrogram, waveform };

std::string to_string(Representation r);
Representation representation_from_string(const std::string& name);

/// How a clip becomes a branch input.
struct InputSpec {
    Representation representation = Representation::mel;
    std::size_t frame_len = 256;
    std::size_t hop_len = 0;  // 0: frame_len / 2
    std::size_t n_mels = 128;

    std::size_t hop() const { return hop_len ? hop_len : frame_len / 2; }
    /// Per-example input shape: [1, F, T] for spectrograms, [1, L] for waveforms.
    ad::Shape shape_for(std::size_t clip_len) const;
    void validate() const;
};

void to_json(nlohmann::json& j, const InputSpec& s);
void from_json(const nlohmann::json& j, InputSpec& s);

/// Flattened branch input for one clip, laid out as shape_for(clip.size()).
std::vector<float> preprocess(const AudioClip& clip, const InputSpec& spec);

struct Conv2dBlockSpec {
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t filters = 10;
    std::size_t pool_h = 2;
    std::size_t pool_w = 2;
    double dropout = 0.1;
    bool same_padding = true;
};

/// Frequency-tall 2-D kernel; height = floor(F * height_fraction) + height_offset.
struct TimbralKernel {
    double height_fraction = 0.5;
    long height_offset = 0;
    std::size_t width = 1;
    std::size_t filters = 8;
};

struct TemporalKernel {
    std::size_t length = 4;
    std::size_t filters = 8;
};

/// Kernel layouts of the five 2-D blocks in Model 1.
enum class KernelLayout { k5_3x3, k4_3x3_1_1x3, k3_3x3_2_1x3 };

std::string to_string(KernelLayout k);
KernelLayout kernel_layout_from_string(const std::string& name);

struct ModelSpec {
    Variant variant = Variant::model1_mel;
    double width = 0.5;  // filter-count multiplier
    std::size_t embedding_dim = 50;
    std::size_t num_para = 1;

    std::vector<Conv2dBlockSpec> blocks;  // Model 1

    std::vector<std::size_t> front_filters;  // Model 2: first conv, then one per pooled block
    std::size_t front_kernel = 3;
    std::size_t front_pool = 3;

    std::size_t back_filters = 512;  // residual back end (Models 2 and 3)
    std::size_t back_kernel = 7;

    std::vector<TimbralKernel> timbral;  // Model 3
    std::vector<TemporalKernel> temporal;

    static ModelSpec defaults(Variant variant, std::size_t num_para,
                              KernelLayout layout = KernelLayout::k5_3x3);

    std::size_t scaled(std::size_t filters) const;
    /// Representation the variant consumes by default.
    Representation default_representation() const;
    /// Throws InvalidArgument if `r` cannot feed this variant.
    void check_representation(Representation r) const;
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

/// Parameters touched by one branch application.
struct BranchTrace {
    std::vector<const void*> storage;
    std::uint64_t checksum = 0;
};

/// Two applications of one branch (shared parameters) merged by
/// subtraction, followed by a dense head. The branch input is
/// [N, input_shape...].
template <typename T>
class SiameseModel {
public:
    SiameseModel(ModelSpec spec, ad::Shape input_shape, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    const ad::Shape& input_shape() const { return input_shape_; }
    ad::ParameterSet<T>& params() { return params_; }
    const ad::ParameterSet<T>& params() const { return params_; }

    /// Branch output at the embedding layer, [N, embedding_dim].
    ad::Var<T> branch(const ad::Var<T>& x, ad::Mode mode, Rng* rng);
    /// branch(processed) - branch(unprocessed).
    ad::Var<T> merge(const ad::Var<T>& unprocessed, const ad::Var<T>& processed, ad::Mode mode, Rng* rng);
    /// Dense head over the merge vector, [N, num_para].
    ad::Var<T> forward(const ad::Var<T>& unprocessed, const ad::Var<T>& processed, ad::Mode mode, Rng* rng);

    /// Shape entering the embedding dense layer for one example (Model 1:
    /// the last pooled feature map).
    const ad::Shape& pre_embedding_shape() const { return pre_embedding_shape_; }

    /// When on, every branch() call appends a BranchTrace.
    void set_tracing(bool on) {
        tracing_ = on;
        traces_.clear();
    }
    const std::vector<BranchTrace>& traces() const { return traces_; }

private:
    ad::Var<T> param(const std::string& name, const ad::Shape& shape, ad::Init init, std::size_t fan_in = 1,
                     std::size_t fan_out = 1);
    ad::Var<T> conv_bn_relu(const std::string& name, const ad::Var<T>& x, std::size_t out, std::size_t kernel,
                            std::size_t pad, ad::Mode mode);
    ad::Var<T> residual_back_end(const ad::Var<T>& x, ad::Mode mode);
    ad::Var<T> model1(const ad::Var<T>& x, ad::Mode mode, Rng* rng);
    ad::Var<T> model2(const ad::Var<T>& x, ad::Mode mode);
    ad::Var<T> model3(const ad::Var<T>& x, ad::Mode mode);

    ModelSpec spec_;
    ad::Shape input_shape_;
    ad::ParameterSet<T> params_;
    ad::Shape pre_embedding_shape_;
    bool tracing_ = false;
    BranchTrace* current_trace_ = nullptr;
    std::vector<BranchTrace> traces_;
};

/// JSON written next to every checkpoint.
struct ModelSidecar {
    ModelSpec spec;
    InputSpec input;
    ad::Shape input_shape;
    std::vector<std::string> label_keys;
    std::vector<ParamRange> label_ranges;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ModelSidecar& s);
void from_json(const nlohmann::json& j, ModelSidecar& s);

void save_model(const SiameseModel<float>& model, const ModelSidecar& sidecar, const std::filesystem::path& path);
/// Reads `path` and `path`.json; throws IoError naming whichever is missing.
std::pair<SiameseModel<float>, ModelSidecar> load_model(const std::filesystem::path& path);

}  // namespace drc
