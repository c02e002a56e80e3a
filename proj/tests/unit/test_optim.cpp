#include <cmath>
#include <fstream>

#include "doctest.h"
#include "drcbench/checkpoint.hpp"
#include "drcbench/errors.hpp"
#include "drcbench/optim.hpp"
#include "drcbench/params.hpp"
#include "helpers.hpp"

using namespace drc;
using namespace drc::ad;

TEST_CASE("adadelta first step closed form") {
    std::vector<double> x{0.0, 3.0};
    const std::vector<double> g{1.0, 1.0};
    AdadeltaState st;
    adadelta_step<double>(x, g, st);
    const double expected = -std::sqrt(1e-6) / std::sqrt(0.05 * 1.0 + 1e-6);
    CHECK(std::abs(x[0] - expected) < 1e-12);
    CHECK(std::abs(x[0] - (-4.4721e-3)) < 1e-6);
    CHECK(std::abs((x[1] - 3.0) - expected) < 1e-12);
    CHECK(st.sq_grad[0] == doctest::Approx(0.05));
    CHECK(st.sq_update[0] == doctest::Approx(0.05 * expected * expected));
}

TEST_CASE("adadelta zero gradient leaves everything unchanged") {
    std::vector<float> x{1.0f, -2.0f, 0.5f};
    const std::vector<float> g(3, 0.0f);
    AdadeltaState st;
    adadelta_step<float>(x, g, st);
    CHECK(x == std::vector<float>{1.0f, -2.0f, 0.5f});
    for (double v : st.sq_grad) CHECK(v == 0.0);
    for (double v : st.sq_update) CHECK(v == 0.0);
}

TEST_CASE("adadelta matches a scalar recurrence over five steps") {
    std::vector<double> x{0.0};
    AdadeltaState st;
    double eg = 0, ed = 0, xr = 0;
    std::vector<double> steps;
    for (int k = 0; k < 5; ++k) {
        const double before = x[0];
        adadelta_step<double>(x, std::vector<double>{1.0}, st);
        eg = 0.95 * eg + 0.05;
        const double d = -std::sqrt(ed + 1e-6) / std::sqrt(eg + 1e-6);
        ed = 0.95 * ed + 0.05 * d * d;
        xr += d;
        CHECK(x[0] == doctest::Approx(xr).epsilon(1e-12));
        steps.push_back(std::abs(x[0] - before));
    }
    // under a constant gradient the step size creeps upward
    for (std::size_t k = 1; k < steps.size(); ++k) CHECK(steps[k] > steps[k - 1]);
    CHECK(st.sq_grad[0] >= 0.0);
    CHECK(st.sq_update[0] >= 0.0);
}

TEST_CASE("adadelta errors") {
    std::vector<float> x{1.0f, 2.0f};
    AdadeltaState st;
    CHECK_THROWS_AS(adadelta_step<float>(x, std::vector<float>{1.0f, NAN}, st), NumericError);
    CHECK_THROWS_AS(adadelta_step<float>(x, std::vector<float>{1.0f}, st), ShapeError);
    adadelta_step<float>(x, std::vector<float>{1.0f, 1.0f}, st);
    std::vector<float> y{1.0f, 2.0f, 3.0f};
    CHECK_THROWS_AS(adadelta_step<float>(y, std::vector<float>{1.0f, 1.0f, 1.0f}, st), ShapeError);
}

TEST_CASE("adadelta over a parameter set minimises a quadratic") {
    ParameterSet<double> ps(1);
    auto w = ps.get("w", {4}, Init::glorot_uniform, 4, 1);
    auto unused = ps.get("unused", {2}, Init::ones);
    Adadelta<double> opt(ps);
    const auto target = testutil::random_tensor({4}, 2);
    double first = 0, last = 0;
    for (int it = 0; it < 3000; ++it) {
        auto loss = mse_loss(w, Var<double>::leaf(target));
        if (it == 0) first = loss.value()[0];
        last = loss.value()[0];
        backward(loss);
        opt.step();
        ps.zero_grad();
    }
    CHECK(last < 0.05 * first);
    CHECK(unused.value()[0] == 1.0);
}

TEST_CASE("parameter set creation, init and checksum") {
    ParameterSet<float> a(7), b(7), c(8);
    auto wa = a.get("dense.w", {100, 50}, Init::glorot_uniform, 100, 50);
    b.get("dense.w", {100, 50}, Init::glorot_uniform, 100, 50);
    c.get("dense.w", {100, 50}, Init::glorot_uniform, 100, 50);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    const double limit = std::sqrt(6.0 / 150.0);
    double mx = 0;
    for (float v : wa.value().storage()) mx = std::max(mx, double(std::abs(v)));
    CHECK(mx <= limit);
    CHECK(mx > 0.9 * limit);
    CHECK(a.get("dense.w", {100, 50}, Init::zeros).node() == wa.node());
    CHECK_THROWS_AS(a.get("dense.w", {50, 100}, Init::zeros), ShapeError);
    auto g = a.get("bn.gamma", {3}, Init::ones);
    CHECK(g.value()[2] == 1.0f);
    CHECK(a.numel() == 5003);
    CHECK(a.size() == 2);
    CHECK(a.entries()[1].first == "bn.gamma");
}

TEST_CASE("checkpoint round trip") {
    testutil::TempDir dir("ckpt");
    ParameterSet<float> a(3);
    a.get("conv1.w", {4, 1, 3, 3}, Init::glorot_uniform, 9, 36);
    a.get("conv1.b", {4}, Init::zeros);
    auto& st = a.stats("bn1", 4);
    st.mean[1] = 0.25f;
    st.var[2] = 3.0f;
    write_checkpoint(a.export_tensors(), dir.path / "m.drcw");

    const auto tensors = read_checkpoint(dir.path / "m.drcw");
    CHECK(tensors.size() == 4);
    CHECK(tensors[0].name == "conv1.w");
    CHECK(tensors[0].shape == Shape{4, 1, 3, 3});

    ParameterSet<float> b(99);
    b.get("conv1.w", {4, 1, 3, 3}, Init::glorot_uniform, 9, 36);
    b.get("conv1.b", {4}, Init::zeros);
    b.stats("bn1", 4);
    b.import_tensors(tensors);
    CHECK(b.checksum() == a.checksum());
    CHECK(b.stats("bn1", 4).mean[1] == 0.25f);
    CHECK(b.stats("bn1", 4).var[2] == 3.0f);

    std::ifstream in(dir.path / "m.drcw", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes.substr(0, 4) == "DRCW");
    CHECK(bytes[4] == 1);
    // first record: name length then name
    CHECK(static_cast<unsigned char>(bytes[8]) == 7);
    CHECK(bytes.substr(12, 7) == "conv1.w");

    ParameterSet<double> d(0);
    d.get("conv1.w", {4, 1, 3, 3}, Init::zeros);
    d.get("conv1.b", {4}, Init::zeros);
    d.stats("bn1", 4);
    d.copy_values_from(a);
    CHECK(d.entries()[0].second.value()[5] == doctest::Approx(a.entries()[0].second.value()[5]));
}

TEST_CASE("checkpoint errors name what is wrong") {
    testutil::TempDir dir("ckpt_err");
    ParameterSet<float> a(3);
    a.get("w", {2, 2}, Init::ones);
    write_checkpoint(a.export_tensors(), dir.path / "m.drcw");
    std::filesystem::resize_file(dir.path / "m.drcw", 20);
    CHECK_THROWS_WITH_AS(read_checkpoint(dir.path / "m.drcw"), doctest::Contains("truncated"), FormatError);
    std::ofstream(dir.path / "x.drcw", std::ios::binary) << "NOPE0000";
    CHECK_THROWS_WITH_AS(read_checkpoint(dir.path / "x.drcw"), doctest::Contains("DRCW"), FormatError);
    CHECK_THROWS_AS(read_checkpoint(dir.path / "none.drcw"), IoError);

    ParameterSet<float> b(3);
    b.get("w", {2, 2}, Init::ones);
    b.get("extra", {1}, Init::ones);
    CHECK_THROWS_WITH_AS(b.import_tensors(a.export_tensors()), doctest::Contains("extra"), FormatError);
    ParameterSet<float> c(3);
    c.get("w", {4}, Init::ones);
    CHECK_THROWS_WITH_AS(c.import_tensors(a.export_tensors()), doctest::Contains("'w'"), FormatError);
}
