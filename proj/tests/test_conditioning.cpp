#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "sora/conditioning.hpp"

using namespace sora;

TEST_CASE("mask_prob zero always yields NoMask") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        auto s = sample_pattern(rng, 8, 0.0);
        CHECK(s.pattern == MaskPattern::NoMask);
        CHECK_FALSE(s.mask.any_unmasked());
    }
}

TEST_CASE("masked fraction matches mask_prob") {
    Rng rng(2);
    const int n = 100000;
    int masked = 0;
    for (int i = 0; i < n; ++i)
        if (sample_pattern(rng, 16, 0.5).pattern != MaskPattern::NoMask) ++masked;
    double frac = static_cast<double>(masked) / n;
    CHECK(frac == doctest::Approx(0.5).epsilon(0.02));

    Rng rng2(3);
    masked = 0;
    for (int i = 0; i < n; ++i)
        if (sample_pattern(rng2, 16, 0.25).pattern != MaskPattern::NoMask) ++masked;
    CHECK(static_cast<double>(masked) / n == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("six patterns equally likely among masked draws") {
    Rng rng(4);
    std::map<MaskPattern, int> counts;
    int masked = 0;
    for (int i = 0; i < 120000; ++i) {
        auto s = sample_pattern(rng, 16, 0.5);
        if (s.pattern == MaskPattern::NoMask) continue;
        ++masked;
        counts[s.pattern]++;
    }
    REQUIRE(counts.size() == 6);
    for (const auto& [p, c] : counts) {
        double freq = static_cast<double>(c) / masked;
        CHECK(std::abs(freq - 1.0 / 6.0) < 0.01);
    }
}

TEST_CASE("mask invariants under fuzz") {
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
        int frames = 2 + rng.uniform_int(16);
        auto s = sample_pattern(rng, frames, 0.9);
        CHECK(s.mask.frames() == frames);
        // a diffused frame always remains
        CHECK(s.mask.masked_count() >= 1);
        if (s.pattern != MaskPattern::NoMask) CHECK(s.mask.any_unmasked());
    }
}

TEST_CASE("pattern shapes") {
    Rng rng(6);
    for (int i = 0; i < 5000; ++i) {
        auto s = sample_pattern(rng, 12, 1.0);
        const auto& m = s.mask.unmasked;
        switch (s.pattern) {
            case MaskPattern::First1:
                CHECK(m[0]);
                CHECK(s.mask.frames() - s.mask.masked_count() == 1);
                break;
            case MaskPattern::Last1:
                CHECK(m[11]);
                CHECK(s.mask.frames() - s.mask.masked_count() == 1);
                break;
            case MaskPattern::FirstK: {
                int k = 12 - s.mask.masked_count();
                CHECK(k >= 1);
                CHECK(k <= 3);  // ceil(12/4)
                for (int f = 0; f < k; ++f) CHECK(m[static_cast<std::size_t>(f)]);
                break;
            }
            case MaskPattern::LastK: {
                int k = 12 - s.mask.masked_count();
                CHECK(k <= 3);
                for (int f = 0; f < k; ++f) CHECK(m[static_cast<std::size_t>(11 - f)]);
                break;
            }
            case MaskPattern::FirstLastK:
                CHECK(m[0]);
                CHECK(m[11]);
                break;
            case MaskPattern::Random:
                CHECK(s.mask.any_unmasked());
                break;
            case MaskPattern::NoMask: break;
        }
    }
}

TEST_CASE("sample_pattern preconditions") {
    Rng rng(7);
    CHECK_THROWS_AS((void)sample_pattern(rng, 1, 0.5), DomainError);
    CHECK_THROWS_AS((void)sample_pattern(rng, 8, 1.5), DomainError);
    CHECK_NOTHROW((void)sample_pattern(rng, 1, 0.0));
}

TEST_CASE("assign_timesteps rule") {
    FrameMask m;
    m.unmasked = {1, 0, 0};
    auto t = assign_timesteps(m, 0.7);
    CHECK(t == std::vector<double>{0.0, 0.7, 0.7});

    FrameMask none;
    none.unmasked = {0, 0, 0, 0};
    auto tn = assign_timesteps(none, 0.3);
    CHECK(tn == std::vector<double>{0.3, 0.3, 0.3, 0.3});

    FrameMask all;
    all.unmasked = {1, 1};
    auto ta = assign_timesteps(all, 0.9);
    CHECK(ta == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS((void)assign_timesteps(m, 1.2), DomainError);
}

TEST_CASE("assign_timesteps fuzz: unmasked frames never get nonzero t") {
    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
        int frames = 1 + rng.uniform_int(20);
        FrameMask m;
        m.unmasked.resize(static_cast<std::size_t>(frames));
        for (auto& c : m.unmasked) c = rng.bernoulli(0.4) ? 1 : 0;
        double t = rng.uniform();
        auto ts = assign_timesteps(m, t);
        for (int f = 0; f < frames; ++f) {
            if (m.is_conditioning(f))
                CHECK(ts[static_cast<std::size_t>(f)] == 0.0);
            else
                CHECK(ts[static_cast<std::size_t>(f)] == t);
        }
    }
}

TEST_CASE("caption format matches the documented example") {
    ScoredCaption c{"A cat.", 5.5, 10.0, std::string("pan left")};
    CHECK(format_caption(c) ==
          "A cat. aesthetic score: 5.5, motion score: 10, camera motion: pan left");

    ScoredCaption no_cam{"A cat.", 5.5, 10.0, std::nullopt};
    CHECK(format_caption(no_cam) == "A cat. aesthetic score: 5.5, motion score: 10");

    CHECK(render_score(5.5) == "5.5");
    CHECK(render_score(10.0) == "10");
    CHECK(render_score(0.5) == "0.5");

    ScoredCaption bad{"x", 1.0, 1.0, std::string("wobble")};
    CHECK_THROWS_AS((void)format_caption(bad), ValueError);
}

TEST_CASE("caption parse-back round trip without collisions") {
    const auto& vocab = camera_motion_vocabulary();
    Rng rng(9);
    std::set<std::string> seen;
    int count = 0;
    for (int i = 0; i < 10000; ++i) {
        ScoredCaption c;
        int words = 1 + rng.uniform_int(6);
        for (int w = 0; w < words; ++w) {
            if (w) c.caption += ' ';
            c.caption += "word" + std::to_string(rng.uniform_int(50));
        }
        c.aesthetic = rng.uniform_int(101) / 10.0;  // one-decimal grid
        c.motion = rng.uniform_int(301) / 10.0;
        if (rng.bernoulli(0.6))
            c.camera = vocab[static_cast<std::size_t>(rng.uniform_int(
                static_cast<int>(vocab.size())))];
        std::string s = format_caption(c);
        auto back = parse_caption(s);
        REQUIRE(back.has_value());
        CHECK(back->caption == c.caption);
        CHECK(back->aesthetic == doctest::Approx(c.aesthetic).epsilon(1e-12));
        CHECK(back->motion == doctest::Approx(c.motion).epsilon(1e-12));
        CHECK(back->camera == c.camera);
        // distinct (caption, a, m, label) tuples must format distinctly
        std::string key = c.caption + "|" + std::to_string(c.aesthetic) + "|" +
                          std::to_string(c.motion) + "|" + c.camera.value_or("-");
        if (seen.insert(key).second) ++count;
        else --i;
    }
    CHECK(count > 0);
    CHECK_FALSE(parse_caption("no markers here").has_value());
}

TEST_CASE("embed_text determinism and structure") {
    auto a = embed_text("red square moving right", 8, 16);
    auto b = embed_text("red square moving right", 8, 16);
    CHECK(a.length == 4);
    CHECK(a.tokens.shape() == Shape{8, 16});
    for (std::size_t i = 0; i < a.tokens.numel(); ++i)
        CHECK(a.tokens.data()[i] == b.tokens.data()[i]);

    // empty string: zero-length mask, all-pad embedding
    auto empty = embed_text("", 8, 16);
    CHECK(empty.length == 0);
    for (float v : empty.tokens.data()) CHECK(v == 0.0f);
    CHECK_THROWS_AS((void)empty.active(), ValueError);

    // one differing word changes exactly that token row
    auto c = embed_text("red square moving left", 8, 16);
    for (int tok = 0; tok < 4; ++tok) {
        bool differs = false;
        for (int d = 0; d < 16; ++d)
            differs = differs || a.tokens.at({tok, d}) != c.tokens.at({tok, d});
        CHECK(differs == (tok == 3));
    }

    // truncation and padding
    auto trunc = embed_text("a b c d e f g h i j", 4, 8);
    CHECK(trunc.length == 4);
    CHECK(trunc.active().shape() == Shape{4, 8});
}
