#include <cmath>

#include "doctest.h"
#include "drcbench/errors.hpp"
#include "drcbench/model.hpp"
#include "drcbench/optim.hpp"
#include "helpers.hpp"

using namespace drc;
using namespace drc::ad;
using testutil::random_tensor;

namespace {

template <typename T>
Var<T> input(const Shape& per_example, std::size_t n, std::uint64_t seed) {
    Shape s{n};
    s.insert(s.end(), per_example.begin(), per_example.end());
    Tensor<T> t(s);
    Rng rng(seed);
    for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(0.0, 3.0));
    return Var<T>::leaf(t);
}

bool all_zero(const Tensor<float>& t) {
    for (float v : t.storage())
        if (v != 0.0f) return false;
    return true;
}

}  // namespace

TEST_CASE("model 1 layer arithmetic") {
    ModelSpec spec = ModelSpec::defaults(Variant::model1_spec_tuned, 1);
    spec.width = 1.0;
    SiameseModel<float> m(spec, {1, 128, 249}, 1);
    CHECK(m.pre_embedding_shape() == Shape{20, 4, 7});
    const std::size_t flat = 20 * 4 * 7;
    const auto& p = m.params();
    std::size_t head = 0, convs = 0;
    const std::size_t filters[] = {10, 15, 15, 20, 20};
    std::size_t in = 1;
    for (std::size_t f : filters) {
        convs += f * in * 9 + f;
        in = f;
    }
    for (const auto& [name, v] : p.entries())
        if (name.rfind("embedding", 0) == 0 || name.rfind("head", 0) == 0) head += v.value().numel();
    CHECK(head == flat * 50 + 50 + 50 * 1 + 1);
    CHECK(p.numel() == head + convs);

    ModelSpec quad = ModelSpec::defaults(Variant::model1_mel, 4);
    SiameseModel<float> q(quad, {1, 128, 249}, 1);
    CHECK(q.pre_embedding_shape() == Shape{10, 4, 7});
    CHECK(q.params().contains("head.w"));
}

TEST_CASE("kernel layouts") {
    const auto a = ModelSpec::defaults(Variant::model1_mel, 1, KernelLayout::k4_3x3_1_1x3);
    CHECK(a.blocks[3].kernel_h == 3);
    CHECK(a.blocks[4].kernel_h == 1);
    const auto b = ModelSpec::defaults(Variant::model1_mel, 1, KernelLayout::k3_3x3_2_1x3);
    CHECK(b.blocks[2].kernel_h == 3);
    CHECK(b.blocks[3].kernel_h == 1);
    CHECK(b.blocks[3].kernel_w == 3);
    SiameseModel<float> m(b, {1, 64, 64}, 1);
    CHECK(m.params().entries()[6].second.shape() == Shape{10, 8, 1, 3});
    for (auto k : {KernelLayout::k5_3x3, KernelLayout::k4_3x3_1_1x3, KernelLayout::k3_3x3_2_1x3})
        CHECK(kernel_layout_from_string(to_string(k)) == k);
}

TEST_CASE("model 2 front end follows the size formula") {
    ModelSpec spec = ModelSpec::defaults(Variant::model2_waveform, 1);
    SiameseModel<float> m(spec, {1, 32000}, 1);
    std::size_t len = conv_out_size(32000, 3, 1, 0);
    for (int layer = 1; layer < 7; ++layer) len = conv_out_size(len, 3, 1, 0) / 3;
    CHECK(len == 42);
    CHECK(m.pre_embedding_shape() == Shape{128, len});
    CHECK(m.params().contains("front7.w"));
    CHECK(m.params().contains("res3.gamma"));
    CHECK(m.params().entries().back().first == "head.b");
}

TEST_CASE("model 3 multi-kernel front end") {
    ModelSpec spec = ModelSpec::defaults(Variant::model3_multikernel, 2);
    SiameseModel<float> m(spec, {1, 128, 100}, 1);
    // timbral widths 1/3/7 give 100/98/94 frames, temporal 4..32 give 97..69
    CHECK(m.pre_embedding_shape() == Shape{10 * 4, 69});
    CHECK(m.params().entries()[0].second.shape() == Shape{4, 1, 64, 1});
    CHECK(m.params().entries()[6].second.shape() == Shape{4, 1, 118, 1});
}

TEST_CASE("bad chains name the offending layer") {
    ModelSpec spec = ModelSpec::defaults(Variant::model1_mel, 1);
    CHECK_THROWS_WITH_AS(SiameseModel<float>(spec, {1, 8, 8}, 1), doctest::Contains("layer '"), ShapeError);
    CHECK_THROWS_AS(SiameseModel<float>(spec, {1, 8000}, 1), ShapeError);
    ModelSpec m2 = ModelSpec::defaults(Variant::model2_waveform, 1);
    CHECK_THROWS_WITH_AS(SiameseModel<float>(m2, {1, 200}, 1), doctest::Contains("front"), ShapeError);
    SiameseModel<float> ok(spec, {1, 32, 32}, 1);
    CHECK_THROWS_AS(ok.merge(input<float>({1, 32, 32}, 2, 1), input<float>({1, 32, 32}, 3, 1), Mode::inference,
                             nullptr),
                    ShapeError);
    CHECK_THROWS_AS(ok.branch(input<float>({1, 32, 31}, 2, 1), Mode::inference, nullptr), ShapeError);
}

TEST_CASE("representations bind to variants") {
    CHECK_NOTHROW(ModelSpec::defaults(Variant::model1_mel, 1).check_representation(Representation::mel));
    CHECK_THROWS_AS(ModelSpec::defaults(Variant::model1_mel, 1).check_representation(Representation::spectrogram),
                    InvalidArgument);
    CHECK_THROWS_AS(ModelSpec::defaults(Variant::model2_waveform, 1).check_representation(Representation::mel),
                    InvalidArgument);
    CHECK_NOTHROW(ModelSpec::defaults(Variant::model3_multikernel, 1).check_representation(Representation::spectrogram));
    InputSpec in;
    CHECK(in.shape_for(32000) == Shape{1, 128, 249});
    in.representation = Representation::spectrogram;
    in.frame_len = 512;
    CHECK(in.shape_for(32000) == Shape{1, 257, 124});
    in.representation = Representation::waveform;
    CHECK(in.shape_for(32000) == Shape{1, 32000});
}

TEST_CASE("siamese invariants for every variant") {
    struct Case {
        Variant v;
        Shape shape;
    };
    for (const Case& c : {Case{Variant::model1_mel, {1, 32, 40}}, Case{Variant::model2_waveform, {1, 3000}},
                          Case{Variant::model3_multikernel, {1, 40, 60}}}) {
        ModelSpec spec = ModelSpec::defaults(c.v, 2);
        spec.width = 0.25;
        spec.back_filters = 32;
        SiameseModel<float> m(spec, c.shape, 3);
        const auto a = input<float>(c.shape, 3, 10);
        const auto b = input<float>(c.shape, 3, 11);

        const auto zero = m.merge(a, a, Mode::inference, nullptr).value();
        CHECK(zero.shape() == Shape{3, 50});
        CHECK(all_zero(zero));
        const auto ab = m.merge(a, b, Mode::inference, nullptr).value();
        const auto ba = m.merge(b, a, Mode::inference, nullptr).value();
        for (std::size_t i = 0; i < ab.numel(); ++i) CHECK(ab[i] == -ba[i]);
        CHECK(m.merge(a, b, Mode::inference, nullptr).value().storage() == ab.storage());
        CHECK(m.forward(a, b, Mode::inference, nullptr).shape() == Shape{3, 2});
    }
}

TEST_CASE("both branches use the same storage, before and after updates") {
    ModelSpec spec = ModelSpec::defaults(Variant::model1_mel, 1);
    SiameseModel<float> m(spec, {1, 32, 32}, 5);
    Adadelta<float> opt(m.params());
    Rng rng(1);
    for (int step = 0; step < 3; ++step) {
        m.set_tracing(true);
        auto pred = m.forward(input<float>({1, 32, 32}, 2, 20 + step), input<float>({1, 32, 32}, 2, 30 + step),
                              Mode::training, &rng);
        auto loss = mse_loss(pred, Var<float>::leaf(Tensor<float>(Shape{2, 1}, 0.5f)));
        REQUIRE(m.traces().size() == 2);
        CHECK(m.traces()[0].storage == m.traces()[1].storage);
        CHECK(m.traces()[0].checksum == m.traces()[1].checksum);
        const auto before = m.params().checksum();
        backward(loss);
        opt.step();
        m.params().zero_grad();
        CHECK(m.params().checksum() != before);
        m.set_tracing(false);
    }
}

TEST_CASE("gradient reaches shared weights from both branches") {
    // toy branch: f(x) = x . w with two weights
    auto w = Var<double>::leaf(Tensor<double>(Shape{2, 1}, std::vector<double>{0.3, -0.8}), true);
    const auto xa = Var<double>::leaf(Tensor<double>(Shape{1, 2}, std::vector<double>{1.0, 2.0}));
    const auto xb = Var<double>::leaf(Tensor<double>(Shape{1, 2}, std::vector<double>{-0.5, 4.0}));
    const auto target = Var<double>::leaf(Tensor<double>(Shape{1, 1}, 0.7));
    auto loss_fn = [&] { return mse_loss(sub(dense(xb, w, Var<double>()), dense(xa, w, Var<double>())), target); };
    CHECK(testutil::gradient_check({w}, loss_fn) < 1e-6);
    w.zero_grad();
    auto loss = loss_fn();
    backward(loss);
    // d/dw (xb.w - xa.w - t)^2 = 2 r (xb - xa)
    const double r = (-0.5 * 0.3 + 4.0 * -0.8) - (1.0 * 0.3 + 2.0 * -0.8) - 0.7;
    CHECK(w.grad()[0] == doctest::Approx(2 * r * (-1.5)));
    CHECK(w.grad()[1] == doctest::Approx(2 * r * 2.0));
}

TEST_CASE("full model 1 gradient check, 2-sample batch, double precision") {
    ModelSpec spec = ModelSpec::defaults(Variant::model1_mel, 2);
    spec.width = 0.3;
    SiameseModel<double> m(spec, {1, 32, 32}, 7);
    const auto a = input<double>({1, 32, 32}, 2, 1);
    const auto b = input<double>({1, 32, 32}, 2, 2);
    const auto t = Var<double>::leaf(random_tensor({2, 2}, 3, 0.0, 1.0));
    std::vector<Var<double>> leaves;
    for (const auto& [name, v] : m.params().entries()) leaves.push_back(v);
    const double err = testutil::gradient_check(leaves, [&] {
        Rng rng(11);
        return mse_loss(m.forward(a, b, Mode::training, &rng), t);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("residual models pass a gradient check") {
    for (Variant v : {Variant::model2_waveform, Variant::model3_multikernel}) {
        ModelSpec spec = ModelSpec::defaults(v, 1);
        spec.width = 0.05;
        spec.back_filters = 16;
        spec.embedding_dim = 6;
        const Shape shape = v == Variant::model2_waveform ? Shape{1, 3000} : Shape{1, 24, 40};
        SiameseModel<double> m(spec, shape, 2);
        const auto a = input<double>(shape, 3, 1);
        const auto b = input<double>(shape, 3, 2);
        const auto t = Var<double>::leaf(random_tensor({3, 1}, 3, 0.0, 1.0));
        std::vector<Var<double>> leaves;
        for (const auto& [name, p] : m.params().entries()) leaves.push_back(p);
        // a 3000-sample waveform through six max pools puts ReLU/argmax switch
        // points within 1e-5 of some weights, so use a smaller step here
        CHECK(testutil::gradient_check(
                  leaves, [&] { return mse_loss(m.forward(a, b, Mode::training, nullptr), t); }, 1e-6) < 1e-4);
    }
}

TEST_CASE("save and load a model") {
    testutil::TempDir dir("model");
    ModelSpec spec = ModelSpec::defaults(Variant::model3_multikernel, 2);
    spec.width = 0.25;
    spec.back_filters = 32;
    InputSpec in;
    in.n_mels = 40;
    SiameseModel<float> m(spec, {1, 40, 60}, 9);
    ModelSidecar side{spec, in, {1, 40, 60}, {"attack_ms", "release_ms"}, {{1, 95.5}, {10, 955}}, 9};
    save_model(m, side, dir.path / "m.drcw");
    CHECK(std::filesystem::exists(dir.path / "m.drcw.json"));

    auto [back, bside] = load_model(dir.path / "m.drcw");
    CHECK(back.params().checksum() == m.params().checksum());
    CHECK(bside.label_keys == side.label_keys);
    CHECK(bside.spec.width == 0.25);
    CHECK(bside.label_ranges[1].hi == 955);
    const auto a = input<float>({1, 40, 60}, 2, 1), b = input<float>({1, 40, 60}, 2, 2);
    CHECK(back.merge(a, b, Mode::inference, nullptr).value().storage() ==
          m.merge(a, b, Mode::inference, nullptr).value().storage());

    std::filesystem::remove(dir.path / "m.drcw.json");
    CHECK_THROWS_WITH_AS(load_model(dir.path / "m.drcw"), doctest::Contains("m.drcw.json"), IoError);
    CHECK_THROWS_WITH_AS(load_model(dir.path / "other.drcw"), doctest::Contains("other.drcw"), IoError);
}
