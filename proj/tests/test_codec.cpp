#include <doctest.h>

#include <cmath>

#include "sora/codec.hpp"

using namespace sora;

namespace {

VideoCodec make_codec(std::uint64_t seed = 3) {
    CodecConfig cfg;
    cfg.latent_channels = 4;
    cfg.spatial_hidden = 16;
    cfg.temporal_hidden = 8;
    return VideoCodec(cfg, Rng(seed));
}

VideoTensor random_video(int t, int h, int w, std::uint64_t seed) {
    VideoTensor v(t, h, w, 3);
    Rng rng(seed);
    for (auto& p : v.data) p = static_cast<float>(rng.uniform());
    return v;
}

// Tiny synthetic set: constant backgrounds with a moving bright square.
std::vector<VideoTensor> toy_clips(int n, int frames, int side, std::uint64_t seed) {
    std::vector<VideoTensor> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        VideoTensor v(frames, side, side, 3);
        float bg[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                       static_cast<float>(rng.uniform())};
        int size = 2 + rng.uniform_int(3);
        int x0 = rng.uniform_int(std::max(1, side - size));
        int y0 = rng.uniform_int(std::max(1, side - size));
        int vx = rng.uniform_int(3) - 1;
        for (int t = 0; t < frames; ++t)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    int sx = x0 + vx * t;
                    bool inside = y >= y0 && y < y0 + size && x >= sx && x < sx + size;
                    for (int c = 0; c < 3; ++c)
                        v.at(t, y, x, c) = inside ? 0.9f : bg[c];
                }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

TEST_CASE("latent frame arithmetic") {
    CHECK(latent_frames_for(17) == 5);
    CHECK(latent_frames_for(1) == 1);
    CHECK(latent_frames_for(34) == 10);
    for (int t = 1; t <= 34; ++t) {
        int expect = 1 + static_cast<int>(std::ceil((t - 1) / 4.0));
        CHECK(latent_frames_for(t) == expect);
    }
}

TEST_CASE("encode_spatial shapes and per-frame independence") {
    auto codec = make_codec();
    auto v = random_video(17, 256, 256, 10);
    NoGradGuard ng;
    auto z = codec.encode_spatial(v.to_tensor());
    CHECK(z.shape() == Shape{17, 32, 32, 4});

    // single frame encodes identically alone or in a batch of frames
    auto single = codec.encode_spatial(v.frame(5).to_tensor());
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 4; ++c)
                CHECK(single.at({0, y, x, c}) == z.at({5, y, x, c}));

    // permuting frames permutes latents identically
    VideoTensor perm(3, 16, 16, 3);
    auto small = random_video(3, 16, 16, 11);
    for (int t = 0; t < 3; ++t) {
        int src = (t + 1) % 3;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c) perm.at(t, y, x, c) = small.at(src, y, x, c);
    }
    auto z_small = codec.encode_spatial(small.to_tensor());
    auto z_perm = codec.encode_spatial(perm.to_tensor());
    for (int t = 0; t < 3; ++t) {
        int src = (t + 1) % 3;
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                for (int c = 0; c < 4; ++c)
                    CHECK(z_perm.at({t, y, x, c}) == z_small.at({src, y, x, c}));
    }
}

TEST_CASE("encode_spatial geometry error") {
    auto codec = make_codec();
    auto v = random_video(2, 20, 16, 1);
    NoGradGuard ng;
    CHECK_THROWS_AS((void)codec.encode_spatial(v.to_tensor()), GeometryError);
}

TEST_CASE("encode_temporal latent counts") {
    auto codec = make_codec();
    NoGradGuard ng;
    for (int t : {1, 2, 5, 16, 17, 20, 34}) {
        auto v = random_video(t, 16, 16, 20 + static_cast<std::uint64_t>(t));
        auto z = codec.encode_temporal(codec.encode_spatial(v.to_tensor()));
        CHECK(z.shape()[0] == latent_frames_for(t));
    }
}

TEST_CASE("temporal causality: future frames never touch past latents") {
    auto codec = make_codec();
    NoGradGuard ng;
    auto v = random_video(17, 16, 16, 30);
    auto base = codec.encode_temporal(codec.encode_spatial(v.to_tensor()));
    const int tlat = base.shape()[0];

    for (int j = 0; j < 17; ++j) {
        VideoTensor mod = v;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c)
                    mod.at(j, y, x, c) = 1.0f - mod.at(j, y, x, c);
        auto z = codec.encode_temporal(codec.encode_spatial(mod.to_tensor()));
        for (int i = 0; i < tlat; ++i) {
            if (j < 1 + kTemporalFactor * i) continue;  // j may influence latent i
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x)
                    for (int c = 0; c < 4; ++c)
                        REQUIRE(z.at({i, y, x, c}) == base.at({i, y, x, c}));
        }
    }
}

TEST_CASE("causal padding contract for mixed lengths") {
    auto codec = make_codec();
    NoGradGuard ng;
    auto full = random_video(17, 16, 16, 41);
    for (int L : {1, 5, 9, 13, 17}) {
        VideoTensor padded(17, 16, 16, 3);  // zero-pad beyond L
        for (int t = 0; t < L; ++t)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x)
                    for (int c = 0; c < 3; ++c) padded.at(t, y, x, c) = full.at(t, y, x, c);
        auto zp = codec.encode_temporal(codec.encode_spatial(padded.to_tensor()));
        auto zu = codec.encode_temporal(
            codec.encode_spatial(full.frame_range(0, L).to_tensor()));
        int tl = latent_frames_for(L);
        for (int i = 0; i < tl; ++i)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x)
                    for (int c = 0; c < 4; ++c)
                        REQUIRE(zu.at({i, y, x, c}) == zp.at({i, y, x, c}));
    }
}

TEST_CASE("decode shape contract and clamping") {
    auto codec = make_codec();
    auto v = random_video(13, 16, 24, 50);
    auto z = codec.encode(v);
    CHECK(z.frames == latent_frames_for(13));
    CHECK(z.height == 2);
    CHECK(z.width == 3);
    auto rec = codec.decode(z, v.frames);
    CHECK(rec.frames == v.frames);
    CHECK(rec.height == v.height);
    CHECK(rec.width == v.width);
    CHECK(rec.channels == v.channels);

    LatentVideo zero(5, 2, 2, 4);
    auto out = codec.decode(zero, 17);
    for (float p : out.data) {
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }

    CHECK_THROWS_AS((void)codec.decode(zero, 21), GeometryError);
}

TEST_CASE("identity loss values and stage gating") {
    auto codec = make_codec();
    auto a = Tensor::from_data({2, 2, 2, 4}, std::vector<float>(32, 0.5f));
    auto b_same = Tensor::from_data({5, 2, 2, 4}, std::vector<float>(80, 0.5f));
    CHECK(codec.identity_loss(a, b_same).item() == doctest::Approx(0.0));

    auto b_off = Tensor::from_data({5, 2, 2, 4}, std::vector<float>(80, 2.5f));
    CHECK(codec.identity_loss(a, b_off).item() == doctest::Approx(4.0));

    auto bad = Tensor::from_data({5, 3, 2, 4}, std::vector<float>(120, 0.0f));
    CHECK_THROWS_AS((void)codec.identity_loss(a, bad), DimensionError);

    // stage 2 drops the identity term from the objective
    auto clip = random_video(9, 16, 16, 60);
    NoGradGuard ng;
    auto l1 = codec_feature_loss(codec, clip, 1, 1.0f);
    auto l2 = codec_feature_loss(codec, clip, 2, 1.0f);
    Tensor z2d = codec.encode_spatial(clip.to_tensor());
    auto id = codec.identity_loss(codec.encode_temporal(z2d), z2d);
    CHECK(l1.item() == doctest::Approx(l2.item() + id.item()).epsilon(1e-5));
    CHECK(l1.item() > l2.item());
}

TEST_CASE("segment_clips") {
    auto v34 = random_video(34, 8, 8, 70);
    auto segs = segment_clips(v34);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].frames == 17);
    CHECK(segs[1].frames == 17);

    auto v17 = random_video(17, 8, 8, 71);
    CHECK(segment_clips(v17).size() == 1);

    auto v20 = random_video(20, 8, 8, 72);
    auto s20 = segment_clips(v20);
    REQUIRE(s20.size() == 2);
    CHECK(s20[0].frames == 17);
    CHECK(s20[1].frames == 3);
    // concatenation restores the input
    std::size_t off = 0;
    for (const auto& s : s20) {
        for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(s.data[i] == v20.data[off + i]);
        off += s.data.size();
    }
    CHECK(off == v20.data.size());
}

TEST_CASE("metrics identical and offset") {
    auto a = random_video(3, 16, 16, 80);
    auto m = compute_metrics(a, a);
    CHECK(m.ssim == doctest::Approx(1.0));
    CHECK(m.psnr == doctest::Approx(100.0));

    VideoTensor b = a;
    for (auto& p : b.data) p += 0.1f;  // deliberately unclipped
    auto m2 = compute_metrics(a, b);
    CHECK(m2.psnr == doctest::Approx(20.0).epsilon(1e-4));

    auto c = random_video(3, 16, 8, 81);
    CHECK_THROWS_AS((void)compute_metrics(a, c), DimensionError);
}

TEST_CASE("toy training: contraction and constant-color round trip") {
    // round-trip loss decreases over the first 200 steps on the synthetic set
    {
        auto clips = toy_clips(12, 17, 16, 901);
        auto codec = make_codec(902);
        CodecTrainConfig cfg;
        cfg.spatial_pretrain_steps = 0;
        cfg.stage1_steps = 0;
        cfg.stage2_steps = 0;
        cfg.stage3_steps = 200;
        cfg.batch = 2;
        cfg.seed = 903;
        auto result = codec_train(codec, clips, cfg);
        REQUIRE(result.eval_log.size() >= 3);
        double first = result.eval_log.front().second;
        double mid = result.eval_log[result.eval_log.size() / 2].second;
        double last = result.eval_log.back().second;
        CHECK(mid < first);
        CHECK(last < mid);
    }

    // constant-color clips: staged training reaches round-trip MSE < 1e-3
    {
        std::vector<VideoTensor> clips;
        Rng rng(910);
        for (int i = 0; i < 8; ++i) {
            VideoTensor v(17, 16, 16, 3);
            float col[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                            static_cast<float>(rng.uniform())};
            for (int t = 0; t < 17; ++t)
                for (int y = 0; y < 16; ++y)
                    for (int x = 0; x < 16; ++x)
                        for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = col[c];
            clips.push_back(std::move(v));
        }
        auto codec = make_codec(911);
        CodecTrainConfig cfg;
        cfg.spatial_pretrain_steps = 400;
        cfg.stage1_steps = 120;
        cfg.stage2_steps = 80;
        cfg.stage3_steps = 900;
        cfg.lr = 3e-3;
        cfg.batch = 2;
        cfg.seed = 912;
        codec_train(codec, clips, cfg);

        double mse_acc = 0.0;
        for (const auto& v : clips) {
            auto rec = codec.roundtrip(v);
            double m = 0.0;
            for (std::size_t i = 0; i < v.data.size(); ++i) {
                double d = static_cast<double>(v.data[i]) - rec.data[i];
                m += d * d;
            }
            mse_acc += m / static_cast<double>(v.data.size());
        }
        mse_acc /= static_cast<double>(clips.size());
        CHECK(mse_acc < 1e-3);
    }
}

TEST_CASE("channel stats fitting") {
    std::vector<LatentVideo> latents;
    Rng rng(1000);
    for (int i = 0; i < 4; ++i) {
        LatentVideo z(3, 4, 4, 4);
        for (std::size_t k = 0; k < z.data.size(); ++k) {
            int c = static_cast<int>(k % 4);
            z.data[k] = static_cast<float>(rng.normal(0.5 * c, 1.0 + 0.2 * c));
        }
        latents.push_back(std::move(z));
    }
    auto stats = fit_channel_stats(latents);
    REQUIRE(stats.channels() == 4);
    for (int c = 0; c < 4; ++c) {
        CHECK(stats.mean[static_cast<std::size_t>(c)] ==
              doctest::Approx(0.5 * c).epsilon(0.35));
        CHECK(stats.stddev[static_cast<std::size_t>(c)] > 0.0f);
    }
    CHECK_THROWS_AS((void)fit_channel_stats({}), ValueError);
}

TEST_CASE("latent save/load round trip with stats sidecar") {
    auto dir = std::filesystem::temp_directory_path() / "sora_latent_test";
    std::filesystem::create_directories(dir);
    auto codec = make_codec();
    codec.stats.mean = {0.1f, 0.2f, 0.3f, 0.4f};
    codec.stats.stddev = {1.0f, 1.1f, 1.2f, 1.3f};
    auto v = random_video(9, 16, 16, 1100);
    auto z = codec.encode(v);
    auto path = dir / "clip.vten";
    latent_save(path, z);
    auto back = latent_load(path);
    CHECK(back.frames == z.frames);
    CHECK(back.data == z.data);
    REQUIRE(back.stats.channels() == 4);
    CHECK(back.stats.mean[2] == doctest::Approx(0.3f));
    CHECK(back.stats.stddev[3] == doctest::Approx(1.3f));
    std::filesystem::remove_all(dir);
}
