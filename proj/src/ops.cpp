#include "drcbench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drcbench/errors.hpp"

namespace drc::ad {

namespace {

template <typename T>
using NodeRef = Node<T>&;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

// Independent partial sums keep the loop vectorizable and the summation
// order fixed.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Valid output columns [lo, hi) for kernel column kw: 0 <= ow*s + kw - pad < W.
struct ColRange {
    std::size_t lo;
    std::size_t hi;
};

ColRange col_range(std::size_t kw, std::size_t pad, std::size_t stride, std::size_t width,
                   std::size_t out_width) {
    const long long k = static_cast<long long>(kw) - static_cast<long long>(pad);
    const long long s = static_cast<long long>(stride);
    long long lo = 0;
    if (k < 0) lo = (-k + s - 1) / s;
    long long hi = (static_cast<long long>(width) - 1 - k);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<long long>(hi, static_cast<long long>(out_width));
    if (lo > hi) lo = hi;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct AxisSplit {
    std::size_t outer;
    std::size_t extent;
    std::size_t inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s.at(axis), 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < kernel) return 0;
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, const Conv2dOptions& opt) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    require(xs.size() == 4, "conv2d: input must be [N, C, H, W], got " + shape_str(xs));
    require(ks.size() == 4, "conv2d: kernel must be [Co, Ci, KH, KW], got " + shape_str(ks));
    require(xs[1] == ks[1], "conv2d: input has " + std::to_string(xs[1]) + " channels, kernel expects " +
                                std::to_string(ks[1]));
    require(opt.stride_h > 0 && opt.stride_w > 0, "conv2d: stride must be positive");
    const std::size_t N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const std::size_t Co = ks[0], KH = ks[2], KW = ks[3];
    require(H + 2 * opt.pad_h >= KH && W + 2 * opt.pad_w >= KW,
            "conv2d: kernel " + shape_str({KH, KW}) + " larger than input " + shape_str({H, W}));
    if (bias) require(bias.shape() == Shape{Co}, "conv2d: bias must be [" + std::to_string(Co) + "]");
    const std::size_t OH = conv_out_size(H, KH, opt.stride_h, opt.pad_h);
    const std::size_t OW = conv_out_size(W, KW, opt.stride_w, opt.pad_w);
    const std::size_t sh = opt.stride_h, sw = opt.stride_w, ph = opt.pad_h, pw = opt.pad_w;

    std::vector<ColRange> cols(KW);
    for (std::size_t kw = 0; kw < KW; ++kw) cols[kw] = col_range(kw, pw, sw, W, OW);

    Tensor<T> out(Shape{N, Co, OH, OW});
    const T* x = input.value().ptr();
    const T* w = kernel.value().ptr();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Co; ++co) {
            T* o = out.ptr() + (n * Co + co) * OH * OW;
            if (bias) std::fill(o, o + OH * OW, bias.value()[co]);
            for (std::size_t ci = 0; ci < Ci; ++ci) {
                const T* xin = x + (n * Ci + ci) * H * W;
                const T* wk = w + (co * Ci + ci) * KH * KW;
                for (std::size_t kh = 0; kh < KH; ++kh)
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const T wv = wk[kh * KW + kw];
                        const auto [lo, hi] = cols[kw];
                        for (std::size_t oh = 0; oh < OH; ++oh) {
                            const long long ih = static_cast<long long>(oh * sh + kh) - static_cast<long long>(ph);
                            if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                            const T* row = xin + ih * W + kw - pw;
                            T* orow = o + oh * OW;
                            if (sw == 1) {
                                for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] += wv * row[ow];
                            } else {
                                for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] += wv * row[ow * sw];
                            }
                        }
                    }
            }
        }

    auto backward = [=](Node<T>& self) {
        const T* go = self.grad.ptr();
        Node<T>* xn = self.parents[0].get();
        Node<T>* kn = self.parents[1].get();
        const T* xv = xn->value.ptr();
        const T* wv = kn->value.ptr();
        if (xn->requires_grad) {
            T* gx = xn->grad_buffer().ptr();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                    T* gxi = gx + (n * Ci + ci) * H * W;
                    for (std::size_t co = 0; co < Co; ++co) {
                        const T* g = go + (n * Co + co) * OH * OW;
                        const T* wk = wv + (co * Ci + ci) * KH * KW;
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const T k = wk[kh * KW + kw];
                                const auto [lo, hi] = cols[kw];
                                for (std::size_t oh = 0; oh < OH; ++oh) {
                                    const long long ih = static_cast<long long>(oh * sh + kh) - static_cast<long long>(ph);
                                    if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                                    T* row = gxi + ih * W + kw - pw;
                                    const T* grow = g + oh * OW;
                                    if (sw == 1) {
                                        for (std::size_t ow = lo; ow < hi; ++ow) row[ow] += k * grow[ow];
                                    } else {
                                        for (std::size_t ow = lo; ow < hi; ++ow) row[ow * sw] += k * grow[ow];
                                    }
                                }
                            }
                    }
                }
        }
        if (kn->requires_grad) {
            T* gw = kn->grad_buffer().ptr();
            for (std::size_t co = 0; co < Co; ++co)
                for (std::size_t ci = 0; ci < Ci; ++ci)
                    for (std::size_t kh = 0; kh < KH; ++kh)
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            const auto [lo, hi] = cols[kw];
                            T acc = 0;
                            for (std::size_t n = 0; n < N; ++n) {
                                const T* g = go + (n * Co + co) * OH * OW;
                                const T* xin = xv + (n * Ci + ci) * H * W;
                                for (std::size_t oh = 0; oh < OH; ++oh) {
                                    const long long ih = static_cast<long long>(oh * sh + kh) - static_cast<long long>(ph);
                                    if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                                    const T* row = xin + ih * W + kw - pw;
                                    if (sw == 1) {
                                        acc += dot(g + oh * OW + lo, row + lo, hi - lo);
                                    } else {
                                        for (std::size_t ow = lo; ow < hi; ++ow) acc += g[oh * OW + ow] * row[ow * sw];
                                    }
                                }
                            }
                            gw[((co * Ci + ci) * KH + kh) * KW + kw] += acc;
                        }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* gb = self.parents[2]->grad_buffer().ptr();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t co = 0; co < Co; ++co) {
                    const T* g = go + (n * Co + co) * OH * OW;
                    T s = 0;
                    for (std::size_t i = 0; i < OH * OW; ++i) s += g[i];
                    gb[co] += s;
                }
        }
    };
    std::vector<Var<T>> parents{input, kernel};
    if (bias) parents.push_back(bias);
    return make_result<T>("conv2d", std::move(out), std::move(parents), backward);
}

template <typename T>
Var<T> conv1d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride,
              std::size_t pad) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    require(xs.size() == 3, "conv1d: input must be [N, C, L], got " + shape_str(xs));
    require(ks.size() == 3, "conv1d: kernel must be [Co, Ci, K], got " + shape_str(ks));
    Conv2dOptions opt;
    opt.stride_w = stride;
    opt.pad_w = pad;
    Var<T> y = conv2d(reshape(input, {xs[0], xs[1], 1, xs[2]}), reshape(kernel, {ks[0], ks[1], 1, ks[2]}),
                      bias, opt);
    return reshape(y, {y.shape()[0], y.shape()[1], y.shape()[3]});
}

template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t window_h, std::size_t window_w) {
    const Shape& xs = input.shape();
    require(xs.size() == 4, "maxpool2d: input must be [N, C, H, W], got " + shape_str(xs));
    require(window_h > 0 && window_w > 0, "maxpool2d: window must be positive");
    const std::size_t NC = xs[0] * xs[1], H = xs[2], W = xs[3];
    require(H >= window_h && W >= window_w,
            "maxpool2d: window " + shape_str({window_h, window_w}) + " larger than input " + shape_str({H, W}));
    const std::size_t OH = H / window_h, OW = W / window_w;
    Tensor<T> out(Shape{xs[0], xs[1], OH, OW});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    const T* x = input.value().ptr();
    for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                std::size_t best = p * H * W + oh * window_h * W + ow * window_w;
                for (std::size_t i = 0; i < window_h; ++i)
                    for (std::size_t j = 0; j < window_w; ++j) {
                        const std::size_t idx = p * H * W + (oh * window_h + i) * W + ow * window_w + j;
                        if (x[idx] > x[best]) best = idx;
                    }
                const std::size_t o = (p * OH + oh) * OW + ow;
                out[o] = x[best];
                (*argmax)[o] = best;
            }
    return make_result<T>("maxpool2d", std::move(out), {input}, [argmax](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        const T* go = self.grad.ptr();
        for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += go[o];
    });
}

template <typename T>
Var<T> maxpool1d(const Var<T>& input, std::size_t window) {
    const Shape& xs = input.shape();
    require(xs.size() == 3, "maxpool1d: input must be [N, C, L], got " + shape_str(xs));
    Var<T> y = maxpool2d(reshape(input, {xs[0], xs[1], 1, xs[2]}), 1, window);
    return reshape(y, {xs[0], xs[1], y.shape()[3]});
}

template <typename T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                 Mode mode, double eps) {
    const Shape& xs = input.shape();
    require(xs.size() >= 2, "batchnorm: input must be [N, C, ...], got " + shape_str(xs));
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t S = input.value().numel() / (N * C);
    require(gamma.shape() == Shape{C} && beta.shape() == Shape{C},
            "batchnorm: gamma/beta must be [" + std::to_string(C) + "]");
    require(stats.mean.numel() == C && stats.var.numel() == C, "batchnorm: running stats size mismatch");
    const std::size_t M = N * S;
    const T* x = input.value().ptr();

    auto xhat = std::make_shared<std::vector<T>>(input.value().numel());
    auto inv_std = std::make_shared<std::vector<T>>(C);
    Tensor<T> out(xs);
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::training) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < S; ++i) s += x[(n * C + c) * S + i];
            mean = s / M;
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < S; ++i) {
                    const double d = x[(n * C + c) * S + i] - mean;
                    v += d * d;
                }
            var = v / M;
            stats.mean[c] = static_cast<T>(kBatchNormMomentum * stats.mean[c] + (1.0 - kBatchNormMomentum) * mean);
            stats.var[c] = static_cast<T>(kBatchNormMomentum * stats.var[c] + (1.0 - kBatchNormMomentum) * var);
        } else {
            mean = stats.mean[c];
            var = stats.var[c];
        }
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[c] = static_cast<T>(istd);
        const T g = gamma.value()[c], b = beta.value()[c];
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t idx = (n * C + c) * S + i;
                const T h = static_cast<T>((x[idx] - mean) * istd);
                (*xhat)[idx] = h;
                out[idx] = g * h + b;
            }
    }

    const bool train = mode == Mode::training;
    return make_result<T>("batchnorm", std::move(out), {input, gamma, beta}, [=](Node<T>& self) {
        const T* go = self.grad.ptr();
        Node<T>* xn = self.parents[0].get();
        Node<T>* gn = self.parents[1].get();
        Node<T>* bn = self.parents[2].get();
        std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < S; ++i) {
                    const std::size_t idx = (n * C + c) * S + i;
                    sum_g[c] += go[idx];
                    sum_gh[c] += go[idx] * (*xhat)[idx];
                }
        if (gn->requires_grad) {
            T* gg = gn->grad_buffer().ptr();
            for (std::size_t c = 0; c < C; ++c) gg[c] += static_cast<T>(sum_gh[c]);
        }
        if (bn->requires_grad) {
            T* gb = bn->grad_buffer().ptr();
            for (std::size_t c = 0; c < C; ++c) gb[c] += static_cast<T>(sum_g[c]);
        }
        if (xn->requires_grad) {
            T* gx = xn->grad_buffer().ptr();
            const T* gamma_v = gn->value.ptr();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const double scale = gamma_v[c] * (*inv_std)[c];
                    for (std::size_t i = 0; i < S; ++i) {
                        const std::size_t idx = (n * C + c) * S + i;
                        if (train) {
                            gx[idx] += static_cast<T>(scale / M *
                                                      (M * go[idx] - sum_g[c] - (*xhat)[idx] * sum_gh[c]));
                        } else {
                            gx[idx] += static_cast<T>(scale * go[idx]);
                        }
                    }
                }
        }
    });
}

template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    require(xs.size() == 2, "dense: input must be [N, in], got " + shape_str(xs));
    require(ws.size() == 2 && ws[0] == xs[1],
            "dense: weight " + shape_str(ws) + " does not accept input " + shape_str(xs));
    const std::size_t N = xs[0], I = ws[0], O = ws[1];
    if (bias) require(bias.shape() == Shape{O}, "dense: bias must be [" + std::to_string(O) + "]");
    Tensor<T> out(Shape{N, O});
    const T* x = input.value().ptr();
    const T* w = weight.value().ptr();
    for (std::size_t n = 0; n < N; ++n) {
        T* y = out.ptr() + n * O;
        if (bias) std::copy_n(bias.value().ptr(), O, y);
        for (std::size_t i = 0; i < I; ++i) axpy(x[n * I + i], w + i * O, y, O);
    }
    std::vector<Var<T>> parents{input, weight};
    if (bias) parents.push_back(bias);
    return make_result<T>("dense", std::move(out), std::move(parents), [=](Node<T>& self) {
        const T* go = self.grad.ptr();
        Node<T>* xn = self.parents[0].get();
        Node<T>* wn = self.parents[1].get();
        if (xn->requires_grad) {
            T* gx = xn->grad_buffer().ptr();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < I; ++i) gx[n * I + i] += dot(go + n * O, wn->value.ptr() + i * O, O);
        }
        if (wn->requires_grad) {
            T* gw = wn->grad_buffer().ptr();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < I; ++i) axpy(xn->value[n * I + i], go + n * O, gw + i * O, O);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* gb = self.parents[2]->grad_buffer().ptr();
            for (std::size_t n = 0; n < N; ++n) axpy(T(1), go + n * O, gb, O);
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
    Tensor<T> out(input.shape());
    const T* x = input.value().ptr();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return make_result<T>("relu", std::move(out), {input}, [](Node<T>& self) {
        Node<T>* xn = self.parents[0].get();
        T* gx = xn->grad_buffer().ptr();
        const T* go = self.grad.ptr();
        const T* x = xn->value.ptr();
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            if (x[i] > T(0)) gx[i] += go[i];
    });
}

template <typename T>
Var<T> dropout(const Var<T>& input, double p, Rng& rng, Mode mode) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout: p must be in [0, 1)");
    if (mode == Mode::inference || p == 0.0) return input;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<T>>(input.value().numel());
    for (auto& m : *mask) m = rng.uniform() >= p ? keep_scale : T(0);
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = input.value()[i] * (*mask)[i];
    return make_result<T>("dropout", std::move(out), {input}, [mask](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        const T* go = self.grad.ptr();
        for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += go[i] * (*mask)[i];
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape("add", a, b);
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_result<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->accumulate(self.grad.data());
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape("sub", a, b);
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad.data());
        if (self.parents[1]->requires_grad) {
            T* g = self.parents[1]->grad_buffer().ptr();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape) {
    return make_result<T>("reshape", input.value().reshaped(std::move(shape)), {input}, [](Node<T>& self) {
        self.parents[0]->accumulate(self.grad.data());
    });
}

template <typename T>
Var<T> flatten(const Var<T>& input) {
    const Shape& xs = input.shape();
    require(!xs.empty(), "flatten: scalar input");
    return reshape(input, {xs[0], input.value().numel() / std::max<std::size_t>(xs[0], 1)});
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& input) {
    const Shape& xs = input.shape();
    require(xs.size() >= 3, "global_avg_pool: input must be [N, C, ...], got " + shape_str(xs));
    const std::size_t NC = xs[0] * xs[1];
    const std::size_t S = input.value().numel() / NC;
    Tensor<T> out(Shape{xs[0], xs[1]});
    for (std::size_t p = 0; p < NC; ++p) {
        T s = 0;
        for (std::size_t i = 0; i < S; ++i) s += input.value()[p * S + i];
        out[p] = s / static_cast<T>(S);
    }
    return make_result<T>("global_avg_pool", std::move(out), {input}, [NC, S](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        for (std::size_t p = 0; p < NC; ++p) {
            const T g = self.grad[p] / static_cast<T>(S);
            for (std::size_t i = 0; i < S; ++i) gx[p * S + i] += g;
        }
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
    require(!inputs.empty(), "concat_channels: no inputs");
    const Shape& first = inputs[0].shape();
    require(first.size() >= 2, "concat_channels: inputs must be [N, C, ...]");
    Shape out_shape = first;
    out_shape[1] = 0;
    std::vector<std::size_t> chunk(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Shape s = inputs[k].shape();
        require(s.size() == first.size(), "concat_channels: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != 1)
                require(s[d] == first[d], "concat_channels: extent mismatch " + shape_str(s) + " vs " +
                                              shape_str(first));
        out_shape[1] += s[1];
        chunk[k] = inputs[k].value().numel() / first[0];
    }
    const std::size_t N = first[0];
    Tensor<T> out(out_shape);
    const std::size_t row = out.numel() / N;
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            std::copy_n(inputs[k].value().ptr() + n * chunk[k], chunk[k], out.ptr() + n * row + off);
            off += chunk[k];
        }
    }
    return make_result<T>("concat_channels", std::move(out), inputs, [N, row, chunk](Node<T>& self) {
        for (std::size_t n = 0; n < N; ++n) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < chunk.size(); ++k) {
                Node<T>* p = self.parents[k].get();
                if (p->requires_grad) axpy(T(1), self.grad.ptr() + n * row + off, p->grad_buffer().ptr() + n * chunk[k], chunk[k]);
                off += chunk[k];
            }
        }
    });
}

template <typename T>
Var<T> mean_axis(const Var<T>& input, std::size_t axis) {
    const Shape& xs = input.shape();
    require(axis < xs.size(), "mean_axis: axis out of range for " + shape_str(xs));
    const AxisSplit sp = split_at(xs, axis);
    Shape os = xs;
    os[axis] = 1;
    Tensor<T> out(os);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t a = 0; a < sp.extent; ++a)
            axpy(T(1), input.value().ptr() + (o * sp.extent + a) * sp.inner, out.ptr() + o * sp.inner, sp.inner);
    const T inv = T(1) / static_cast<T>(sp.extent);
    for (auto& v : out.storage()) v *= inv;
    return make_result<T>("mean_axis", std::move(out), {input}, [sp, inv](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t a = 0; a < sp.extent; ++a)
                axpy(inv, self.grad.ptr() + o * sp.inner, gx + (o * sp.extent + a) * sp.inner, sp.inner);
    });
}

template <typename T>
Var<T> max_axis(const Var<T>& input, std::size_t axis) {
    const Shape& xs = input.shape();
    require(axis < xs.size(), "max_axis: axis out of range for " + shape_str(xs));
    const AxisSplit sp = split_at(xs, axis);
    Shape os = xs;
    os[axis] = 1;
    Tensor<T> out(os, -std::numeric_limits<T>::infinity());
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    const T* x = input.value().ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
            std::size_t best = o * sp.extent * sp.inner + i;
            for (std::size_t a = 1; a < sp.extent; ++a) {
                const std::size_t idx = (o * sp.extent + a) * sp.inner + i;
                if (x[idx] > x[best]) best = idx;
            }
            out[o * sp.inner + i] = x[best];
            (*argmax)[o * sp.inner + i] = best;
        }
    return make_result<T>("max_axis", std::move(out), {input}, [argmax](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += self.grad[o];
    });
}

template <typename T>
Var<T> crop_last(const Var<T>& input, std::size_t length) {
    const Shape& xs = input.shape();
    require(!xs.empty() && length <= xs.back() && length > 0,
            "crop_last: cannot crop " + shape_str(xs) + " to " + std::to_string(length));
    const std::size_t L = xs.back();
    const std::size_t rows = input.value().numel() / L;
    Shape os = xs;
    os.back() = length;
    Tensor<T> out(os);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(input.value().ptr() + r * L, length, out.ptr() + r * length);
    return make_result<T>("crop_last", std::move(out), {input}, [rows, L, length](Node<T>& self) {
        T* gx = self.parents[0]->grad_buffer().ptr();
        for (std::size_t r = 0; r < rows; ++r) axpy(T(1), self.grad.ptr() + r * length, gx + r * L, length);
    });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
    require_same_shape("mse_loss", pred, target);
    const std::size_t n = pred.value().numel();
    require(n > 0, "mse_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred.value()[i]) - target.value()[i];
        s += d * d;
    }
    Tensor<T> out(Shape{1}, static_cast<T>(s / n));
    return make_result<T>("mse_loss", std::move(out), {pred, target}, [n](Node<T>& self) {
        Node<T>* pn = self.parents[0].get();
        Node<T>* tn = self.parents[1].get();
        const T scale = self.grad[0] * T(2) / static_cast<T>(n);
        if (pn->requires_grad) {
            T* g = pn->grad_buffer().ptr();
            for (std::size_t i = 0; i < n; ++i) g[i] += scale * (pn->value[i] - tn->value[i]);
        }
        if (tn->requires_grad) {
            T* g = tn->grad_buffer().ptr();
            for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (pn->value[i] - tn->value[i]);
        }
    });
}

#define DRC_INSTANTIATE_OPS(T)                                                                       \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&);       \
    template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);   \
    template Var<T> maxpool2d(const Var<T>&, std::size_t, std::size_t);                              \
    template Var<T> maxpool1d(const Var<T>&, std::size_t);                                           \
    template struct BatchNormStats<T>;                                                               \
    template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&, Mode, \
                              double);                                                               \
    template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                              \
    template Var<T> relu(const Var<T>&);                                                             \
    template Var<T> dropout(const Var<T>&, double, Rng&, Mode);                                      \
    template Var<T> add(const Var<T>&, const Var<T>&);                                               \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                               \
    template Var<T> reshape(const Var<T>&, Shape);                                                   \
    template Var<T> flatten(const Var<T>&);                                                          \
    template Var<T> global_avg_pool(const Var<T>&);                                                  \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                     \
    template Var<T> mean_axis(const Var<T>&, std::size_t);                                           \
    template Var<T> max_axis(const Var<T>&, std::size_t);                                            \
    template Var<T> crop_last(const Var<T>&, std::size_t);                                           \
    template Var<T> mse_loss(const Var<T>&, const Var<T>&);

DRC_INSTANTIATE_OPS(float)
DRC_INSTANTIATE_OPS(double)

}  // namespace drc::ad
