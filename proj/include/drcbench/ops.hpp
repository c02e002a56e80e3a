#pragma once

#include <vector>

#include "drcbench/random.hpp"
#include "drcbench/tensor.hpp"

namespace drc::ad {

enum class Mode { training, inference };

struct Conv2dOptions {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;  // zero padding on both sides
    std::size_t pad_w = 0;
};

/// Output extent of a convolution along one axis: floor((in + 2 pad - k) / stride) + 1.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Cross-correlation. input [N, Ci, H, W], kernel [Co, Ci, KH, KW], bias [Co]
/// or empty. Throws ShapeError on channel mismatch or a kernel larger than
/// the (padded) input.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              const Conv2dOptions& opt = {});

/// input [N, Ci, L], kernel [Co, Ci, K], bias [Co] or empty.
template <typename T>
Var<T> conv1d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              std::size_t stride = 1, std::size_t pad = 0);

/// Non-overlapping max pooling over the two trailing axes of [N, C, H, W];
/// remainders are dropped.
template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t window_h, std::size_t window_w);

/// [N, C, L] -> [N, C, L / window].
template <typename T>
Var<T> maxpool1d(const Var<T>& input, std::size_t window);

/// Running statistics of one batch-norm layer (one entry per channel).
template <typename T>
struct BatchNormStats {
    Tensor<T> mean;
    Tensor<T> var;
    explicit BatchNormStats(std::size_t channels = 0)
        : mean(Shape{channels}, T(0)), var(Shape{channels}, T(1)) {}
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

/// Per-channel normalization of [N, C, ...]. Training mode normalizes with
/// the biased batch statistics and updates `stats` with momentum 0.9;
/// inference mode uses `stats`.
template <typename T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                 BatchNormStats<T>& stats, Mode mode, double eps = kBatchNormEps);

/// input [N, in], weight [in, out], bias [out] -> [N, out].
template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> relu(const Var<T>& input);

/// Inverted dropout: survivors are scaled by 1/(1-p). Identity in inference.
template <typename T>
Var<T> dropout(const Var<T>& input, double p, Rng& rng, Mode mode);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape);

/// [N, ...] -> [N, prod(...)].
template <typename T>
Var<T> flatten(const Var<T>& input);

/// Mean over every axis after the channel axis: [N, C, ...] -> [N, C].
template <typename T>
Var<T> global_avg_pool(const Var<T>& input);

/// Concatenation along axis 1; the other extents must agree.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs);

/// Reductions over one axis, keeping it with extent 1.
template <typename T>
Var<T> mean_axis(const Var<T>& input, std::size_t axis);
template <typename T>
Var<T> max_axis(const Var<T>& input, std::size_t axis);

/// Keeps the first `length` entries of the last axis.
template <typename T>
Var<T> crop_last(const Var<T>& input, std::size_t length);

/// Mean of squared differences; scalar result of shape {1}.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

}  // namespace drc::ad
