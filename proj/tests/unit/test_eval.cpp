#include <cmath>
#include <set>

#include "doctest.h"
#include "drcbench/errors.hpp"
#include "drcbench/eval.hpp"
#include "drcbench/random.hpp"
#include "helpers.hpp"

using namespace drc;

namespace {

AudioClip drum_loop(std::uint64_t seed, double seconds = 1.0) {
    LoopRecipe r;
    r.kind = LoopKind::drum_like;
    r.seed = seed;
    r.sample_rate = 16000;
    r.duration_s = seconds;
    return synthesize_loop(r);
}

// 10 loops x 50 thresholds, labels on the DS1 grid
void thd_problem(Matrix& labels, std::vector<std::string>& groups) {
    labels = Matrix(500, 1);
    groups.clear();
    for (std::size_t l = 0; l < 10; ++l)
        for (std::size_t t = 0; t < 50; ++t) {
            labels(l * 50 + t, 0) = static_cast<double>(t);
            groups.push_back("loop" + std::to_string(l));
        }
}

EvalConfig quick_eval(std::size_t splits = 10) {
    EvalConfig e;
    e.n_splits = splits;
    e.seed = 3;
    e.jobs = 2;
    return e;
}

ForestConfig quick_forest() {
    ForestConfig f;
    f.n_trees = 30;
    f.seed = 8;
    return f;
}

}  // namespace

TEST_CASE("report ranges") {
    CHECK(report_range(Param::thd) == 49.0);
    CHECK(report_range(Param::ratio) == 19.0);
    CHECK(report_range(Param::attack) == 99.0);
    CHECK(report_range(Param::release) == 999.0);
}

TEST_CASE("crest factor") {
    CHECK(crest_factor_db(std::vector<float>(100, 0.3f)) == doctest::Approx(0.0).epsilon(1e-9));
    std::vector<float> impulse(400, 0.0f);
    impulse[17] = 1.0f;
    CHECK(crest_factor_db(impulse) == doctest::Approx(20.0 * std::log10(std::sqrt(400.0))));
    std::vector<float> sine(16000);
    for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = std::sin(2 * M_PI * 100.0 * i / 16000.0);
    CHECK(crest_factor_db(sine) == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-4));
    CHECK(std::isfinite(crest_factor_db(std::vector<float>(50, 0.0f))));
}

TEST_CASE("baseline features") {
    const AudioClip a = drum_loop(1);
    const auto names = baseline_feature_names();
    REQUIRE(names.size() == kBaselineFeatureCount);
    CHECK(names[0] == "unprocessed.rms_db");
    CHECK(names[13] == "delta.crest_db");

    const auto same = baseline_features(a, a);
    REQUIRE(same.size() == 18);
    for (std::size_t i = 12; i < 18; ++i) CHECK(same[i] == 0.0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(same[i] == same[i + 6]);

    AudioClip silent = a;
    std::fill(silent.samples.begin(), silent.samples.end(), 0.0f);
    for (double v : baseline_features(silent, silent)) CHECK(std::isfinite(v));

    AudioClip shorter = a;
    shorter.samples.resize(a.samples.size() / 2);
    CHECK_THROWS_AS(baseline_features(a, shorter), InvalidArgument);

    // louder copy: rms up 6 dB, crest unchanged
    AudioClip loud = a;
    for (float& s : loud.samples) s *= 2.0f;
    const auto f = baseline_features(a, loud);
    CHECK(f[12] == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-6));
    CHECK(std::abs(f[13]) < 1e-6);
}

TEST_CASE("crest-factor delta rises with ratio on drum loops") {
    // onsets pass before the smoothed gain reacts, so heavier ratios raise
    // the crest factor; near ratio 1 the sign varies from loop to loop
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const AudioClip a = drum_loop(seed);
        DrcParams p;
        p.ratio = 1.0;
        CHECK(std::abs(baseline_features(a, compress(a, p))[13]) < 1e-6);
        double prev = -1e9;
        for (double ratio : {2.0, 4.0, 8.0, 12.0, 19.6}) {
            p.ratio = ratio;
            const double d = baseline_features(a, compress(a, p))[13];
            CHECK(d >= prev);
            prev = d;
        }
        CHECK(prev > 1.0);
    }
}

TEST_CASE("grouped test splits never share a loop with training") {
    Matrix labels;
    std::vector<std::string> groups;
    thd_problem(labels, groups);
    const EvalConfig e = quick_eval();
    std::set<std::vector<std::size_t>> distinct;
    for (std::size_t s = 0; s < 10; ++s) {
        const auto test = test_split(groups, e, s);
        distinct.insert(test);
        CHECK(test.size() == 100);  // 2 of 10 loops
        std::set<std::string> test_loops;
        for (std::size_t i : test) test_loops.insert(groups[i]);
        CHECK(test_loops.size() == 2);
        for (std::size_t i = 0; i < groups.size(); ++i)
            if (!std::binary_search(test.begin(), test.end(), i)) CHECK(test_loops.count(groups[i]) == 0);
        CHECK(test_split(groups, e, s) == test);
    }
    CHECK(distinct.size() > 3);

    EvalConfig flat = e;
    flat.group_by_loop = false;
    const auto t = test_split(groups, flat, 0);
    CHECK(t.size() == 100);
    CHECK(std::is_sorted(t.begin(), t.end()));
}

TEST_CASE("protocol and data errors") {
    Matrix X(40, 3), Y(40, 1);
    std::vector<std::string> four(40);
    for (std::size_t i = 0; i < 40; ++i) four[i] = "l" + std::to_string(i % 4);
    CHECK_THROWS_WITH_AS(evaluate(X, Y, {Param::thd}, four, quick_forest(), quick_eval(), "x"),
                         doctest::Contains("5 loops"), ProtocolError);
    EvalConfig flat = quick_eval();
    flat.group_by_loop = false;
    CHECK_NOTHROW(evaluate(X, Y, {Param::thd}, four, quick_forest(), flat, "x"));
    CHECK_THROWS_AS(evaluate(X, Y, {Param::thd, Param::ratio}, four, quick_forest(), flat, "x"), DataError);
    CHECK_THROWS_AS(evaluate(X, Matrix(39, 1), {Param::thd}, four, quick_forest(), flat, "x"), DataError);
}

TEST_CASE("perfect and random features bracket the forest") {
    Matrix labels;
    std::vector<std::string> groups;
    thd_problem(labels, groups);
    Rng rng(17);

    Matrix perfect(500, 4), noise(500, 4);
    for (std::size_t i = 0; i < 500; ++i) {
        perfect(i, 0) = labels(i, 0);
        for (std::size_t c = 0; c < 4; ++c) {
            if (c > 0) perfect(i, c) = rng.uniform();
            noise(i, c) = rng.uniform();
        }
    }
    ForestConfig fc = quick_forest();
    fc.features_per_split = 4;
    const EvalReport good = evaluate(perfect, labels, {Param::thd}, groups, fc, quick_eval(), "perfect");
    CHECK(good.score(Param::thd).pct_of_range < 1.0);

    // E|k - 24.5| for k uniform on 0..49
    const double analytic = 12.5;
    const EvalReport bad = evaluate(noise, labels, {Param::thd}, groups, quick_forest(), quick_eval(), "noise");
    CHECK(bad.score(Param::thd).mean_predictor_mae == doctest::Approx(analytic).epsilon(0.02));
    CHECK(std::abs(bad.score(Param::thd).mae - analytic) < 0.15 * analytic);
    CHECK(bad.n_loops == 10);
    CHECK(bad.n_features == 4);
}

TEST_CASE("reports are reproducible and well formed") {
    Matrix labels;
    std::vector<std::string> groups;
    thd_problem(labels, groups);
    Matrix X(500, 2);
    Rng rng(4);
    for (std::size_t i = 0; i < 500; ++i) X(i, 0) = labels(i, 0) + rng.uniform(-3, 3), X(i, 1) = rng.uniform();

    testutil::TempDir dir("report");
    EvalConfig e = quick_eval(6);
    const EvalReport r1 = evaluate(X, labels, {Param::thd}, groups, quick_forest(), e, "embedding");
    e.jobs = 1;
    const EvalReport r2 = evaluate(X, labels, {Param::thd}, groups, quick_forest(), e, "embedding");
    CHECK(r1.score(Param::thd).mae == r2.score(Param::thd).mae);
    write_report(r1, dir.path / "a");
    write_report(r2, dir.path / "b");
    CHECK(testutil::read_file(dir.path / "a.csv") == testutil::read_file(dir.path / "b.csv"));
    CHECK(testutil::read_file(dir.path / "a.txt") == testutil::read_file(dir.path / "b.txt"));

    const std::string table = format_report_table(r1);
    CHECK(table.find("Thd") != std::string::npos);
    CHECK(table.find("dB") != std::string::npos);
    CHECK(table.find("grouped by loop") != std::string::npos);
    const std::string csv = format_report_csv(r1);
    CHECK(csv.rfind("param,mae,unit,pct_of_range", 0) == 0);
    CHECK(csv.find("\nthd_db,") != std::string::npos);

    const auto j = nlohmann::json::parse(testutil::read_file(dir.path / "a.json"));
    CHECK(j.at("scores").size() == 1);
    CHECK(j.at("feature_source") == "embedding");
    CHECK_THROWS_AS(r1.score(Param::ratio), InvalidArgument);
}

TEST_CASE("feature matrix round trip") {
    testutil::TempDir dir("fm");
    Matrix m(3, 5);
    for (std::size_t i = 0; i < 15; ++i) m.data[i] = 0.25 * i - 1.0;
    write_feature_matrix(m, dir.path / "f.spec");
    const Matrix back = read_feature_matrix(dir.path / "f.spec");
    CHECK(back.rows == 3);
    CHECK(back.cols == 5);
    CHECK(back.data == m.data);
    CHECK_THROWS_AS(read_feature_matrix(dir.path / "none.spec"), IoError);
}
