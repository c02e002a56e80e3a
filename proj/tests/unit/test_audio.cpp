#include <cmath>
#include <fstream>

#include "doctest.h"
#include "drcbench/audio.hpp"
#include "drcbench/errors.hpp"
#include "helpers.hpp"

using namespace drc;

TEST_CASE("db_to_linear closed forms") {
    CHECK(db_to_linear(0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(db_to_linear(-20.0) == doctest::Approx(0.1).epsilon(1e-15));
    // 10^(-0.3) evaluated as exp(-0.3 ln 10)
    CHECK(std::abs(db_to_linear(-6.0) - std::exp(-0.3 * std::log(10.0))) < 1e-12);
    CHECK(std::abs(db_to_linear(-6.0) - 0.50119) < 1e-5);
}

TEST_CASE("linear_to_db inverts db_to_linear on [1e-6, 1]") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = std::pow(10.0, rng.uniform(-6.0, 0.0));
        CHECK(std::abs(db_to_linear(linear_to_db(x)) - x) <= 1e-9 * x);
    }
    CHECK(std::isinf(linear_to_db(0.0)));
}

TEST_CASE("synthesize_loop is deterministic and peak normalized") {
    LoopRecipe r{LoopKind::drum_like, 120.0, 2.0, 7, 16000, 2};
    const AudioClip a = synthesize_loop(r);
    const AudioClip b = synthesize_loop(r);
    CHECK(a.samples == b.samples);
    CHECK(a.size() == 32000);
    CHECK(std::abs(a.peak() - db_to_linear(-1.0)) < 1e-6);

    for (std::uint64_t seed : {1u, 2u, 99u}) {
        LoopRecipe p{LoopKind::pluck_like, 120.0, 2.0, seed, 16000, 2};
        CHECK(std::abs(synthesize_loop(p).peak() - db_to_linear(-1.0)) < 1e-6);
    }
    r.seed = 8;
    CHECK(synthesize_loop(r).samples != a.samples);
}

TEST_CASE("drum onsets: generator placement agrees with an energy detector") {
    LoopRecipe r{LoopKind::drum_like, 120.0, 2.0, 7, 16000, 2};
    const auto onsets = loop_onsets(r);
    // 4 beats in 2 s at 120 bpm, each beat has the downbeat plus up to one subdivision
    CHECK(onsets.size() >= 4);
    CHECK(onsets.size() <= 8);
    for (std::size_t beat = 0; beat < 4; ++beat)
        CHECK(std::find(onsets.begin(), onsets.end(), beat * 8000) != onsets.end());
    const std::size_t detected = count_energy_onsets(synthesize_loop(r));
    CHECK(detected == onsets.size());
}

TEST_CASE("invalid recipes are rejected") {
    LoopRecipe r;
    r.duration_s = 0.0;
    CHECK_THROWS_AS(synthesize_loop(r), InvalidArgument);
    r = LoopRecipe{};
    r.tempo_bpm = -1.0;
    CHECK_THROWS_AS(synthesize_loop(r), InvalidArgument);
    r = LoopRecipe{};
    r.duration_s = 0.01;
    CHECK_THROWS_AS(synthesize_loop(r), InvalidArgument);
}

TEST_CASE("wav round trip") {
    testutil::TempDir dir("wav");
    AudioClip ramp;
    for (int i = 0; i < 1000; ++i) ramp.samples.push_back(-1.0f + 2.0f * i / 999.0f);
    ramp.sample_rate = 44100;

    write_wav(ramp, dir.path / "f.wav", WavEncoding::float32);
    const AudioClip f = read_wav(dir.path / "f.wav");
    CHECK(f.sample_rate == 44100);
    CHECK(f.samples == ramp.samples);

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        AudioClip c;
        c.samples.resize(1 + rng.below(3000));
        for (auto& s : c.samples) s = static_cast<float>(rng.uniform(-1.0, 1.0));
        write_wav(c, dir.path / "p.wav", WavEncoding::pcm16);
        const AudioClip back = read_wav(dir.path / "p.wav");
        REQUIRE(back.size() == c.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, double(std::abs(back.samples[i] - c.samples[i])));
        CHECK(worst <= std::ldexp(1.0, -15));
        write_wav(c, dir.path / "q.wav", WavEncoding::float32);
        CHECK(read_wav(dir.path / "q.wav").samples == c.samples);
    }
}

TEST_CASE("wav reader rejects malformed files") {
    testutil::TempDir dir("wavbad");
    AudioClip c;
    c.samples.assign(100, 0.25f);
    write_wav(c, dir.path / "ok.wav", WavEncoding::pcm16);

    std::ifstream in(dir.path / "ok.wav", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    {
        std::ofstream(dir.path / "trunc.wav", std::ios::binary) << bytes.substr(0, 30);
        CHECK_THROWS_AS(read_wav(dir.path / "trunc.wav"), FormatError);
    }
    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir.path / "magic.wav", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(read_wav(dir.path / "magic.wav"), doctest::Contains("RIFF"), FormatError);
    }
    {
        std::string stereo = bytes;
        stereo[22] = 2;  // channel count in the fmt chunk
        std::ofstream(dir.path / "stereo.wav", std::ios::binary) << stereo;
        CHECK_THROWS_WITH_AS(read_wav(dir.path / "stereo.wav"), doctest::Contains("channels"), FormatError);
    }
    CHECK_THROWS_AS(read_wav(dir.path / "missing.wav"), IoError);
}

TEST_CASE("wav folder loader sorts by name") {
    testutil::TempDir dir("folder");
    AudioClip c;
    c.samples.assign(2048, 0.1f);
    write_wav(c, dir.path / "b.wav");
    write_wav(c, dir.path / "a.wav");
    std::ofstream(dir.path / "notes.txt") << "x";
    const auto clips = load_wav_folder(dir.path);
    REQUIRE(clips.size() == 2);
    CHECK(clips[0].id == "a");
    CHECK(clips[1].id == "b");
}
