#include "sora/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sora/vten.hpp"

namespace sora {

LatentVideo::LatentVideo(int t, int h, int w, int c)
    : frames(t), height(h), width(w), channels(c) {
    if (t < 1 || h < 1 || w < 1 || c < 1)
        throw GeometryError("LatentVideo: all dims must be positive");
    data.assign(static_cast<std::size_t>(t) * h * w * c, 0.0f);
}

Tensor LatentVideo::to_tensor() const {
    return Tensor::from_data({frames, height, width, channels}, data);
}

LatentVideo LatentVideo::from_tensor(const Tensor& t, ChannelStats stats) {
    if (t.ndim() != 4) throw DimensionError("latent tensor must be rank 4");
    LatentVideo z(t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    std::copy(t.data().begin(), t.data().end(), z.data.begin());
    z.stats = std::move(stats);
    return z;
}

void latent_save(const std::filesystem::path& path, const LatentVideo& z) {
    vten_save(path, {z.frames, z.height, z.width, z.channels},
              std::span<const float>(z.data.data(), z.data.size()));
    std::ofstream os(path.string() + ".stats");
    if (!os) throw IoError("cannot write latent stats sidecar for " + path.string());
    os << "channels " << z.stats.channels() << "\n";
    for (int c = 0; c < z.stats.channels(); ++c)
        os << c << " " << z.stats.mean[static_cast<std::size_t>(c)] << " "
           << z.stats.stddev[static_cast<std::size_t>(c)] << "\n";
}

LatentVideo latent_load(const std::filesystem::path& path) {
    auto [shape, data] = vten_load(path);
    if (shape.size() != 4) throw IoError("latent VTEN must be rank 4: " + path.string());
    LatentVideo z(shape[0], shape[1], shape[2], shape[3]);
    z.data = std::move(data);
    std::ifstream is(path.string() + ".stats");
    if (is) {
        std::string word;
        int n = 0;
        is >> word >> n;
        z.stats.mean.resize(static_cast<std::size_t>(n));
        z.stats.stddev.resize(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) {
            int idx;
            is >> idx >> z.stats.mean[static_cast<std::size_t>(c)] >>
                z.stats.stddev[static_cast<std::size_t>(c)];
        }
    }
    return z;
}

namespace {

Tensor init_linear(Rng& rng, int fan_in, int fan_out) {
    double scale = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    return Tensor::randn({fan_in, fan_out}, rng, scale, /*requires_grad=*/true);
}

Tensor init_bias(int n) { return Tensor::zeros({n}, /*requires_grad=*/true); }

}  // namespace

VideoCodec::VideoCodec(CodecConfig cfg, Rng rng) : cfg_(cfg) {
    cfg_.validate();
    int patch = kSpatialFactor * kSpatialFactor * 3;
    int cz = cfg_.latent_channels;
    int sh = cfg_.spatial_hidden;
    int th = cfg_.temporal_hidden;
    Rng wr = rng.fork("codec-weights");

    se_w1_ = init_linear(wr, patch, sh);
    se_b1_ = init_bias(sh);
    se_w2_ = init_linear(wr, sh, sh);
    se_b2_ = init_bias(sh);
    se_w3_ = init_linear(wr, sh, cz);
    se_b3_ = init_bias(cz);

    sd_w1_ = init_linear(wr, cz, sh);
    sd_b1_ = init_bias(sh);
    sd_w2_ = init_linear(wr, sh, sh);
    sd_b2_ = init_bias(sh);
    sd_w3_ = init_linear(wr, sh, patch);
    sd_b3_ = init_bias(patch);

    te_w1_ = init_linear(wr, 3 * cz, th);
    te_b1_ = init_bias(th);
    te_w2_ = init_linear(wr, 5 * th, th);
    te_b2_ = init_bias(th);
    te_w3_ = init_linear(wr, th, cz);
    te_b3_ = init_bias(cz);

    td_wp_.reserve(5);
    td_bp_.reserve(5);
    for (int p = 0; p < 5; ++p) {
        td_wp_.push_back(init_linear(wr, 2 * cz, th));
        td_bp_.push_back(init_bias(th));
    }
    td_w2_ = init_linear(wr, th, th);
    td_b2_ = init_bias(th);
    td_w3_ = init_linear(wr, th, cz);
    td_b3_ = init_bias(cz);
}

void VideoCodec::set_stage(int stage, bool freeze_spatial) {
    cfg_.stage = stage;
    cfg_.freeze_spatial = freeze_spatial;
    cfg_.validate();
}

Tensor VideoCodec::encode_spatial(const Tensor& video) const {
    if (video.ndim() != 4) throw DimensionError("encode_spatial: expects [T,H,W,C]");
    int T = video.shape()[0], H = video.shape()[1], W = video.shape()[2];
    if (H % kSpatialFactor != 0 || W % kSpatialFactor != 0)
        throw GeometryError("encode_spatial: H and W must be divisible by 8, got " +
                            std::to_string(H) + "x" + std::to_string(W));
    int gh = H / kSpatialFactor, gw = W / kSpatialFactor;
    auto tokens = patchify(video, kSpatialFactor);                 // [T,S,192]
    auto flat = reshape(tokens, {T * gh * gw, tokens.shape()[2]});
    auto h1 = silu(linear(flat, se_w1_, se_b1_));
    auto h2 = silu(linear(h1, se_w2_, se_b2_));
    auto z = linear(h2, se_w3_, se_b3_);
    return reshape(z, {T, gh, gw, cfg_.latent_channels});
}

Tensor VideoCodec::encode_temporal(const Tensor& z2d) const {
    if (z2d.ndim() != 4) throw DimensionError("encode_temporal: expects [T,h,w,Cz]");
    int T = z2d.shape()[0], h = z2d.shape()[1], w = z2d.shape()[2], cz = z2d.shape()[3];
    if (cz != cfg_.latent_channels) throw DimensionError("encode_temporal: channel mismatch");
    int N = h * w;
    int tlat = latent_frames_for(T);
    int th = cfg_.temporal_hidden;

    auto x = reshape(z2d, {T, N, cz});
    // causal conv k=3 s=1 over time, channels as features
    auto padded = pad_axis(x, 0, 2, 0);  // rows t..t+2 = frames t-2..t
    std::vector<Tensor> h1(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        auto win = slice(padded, 0, t, 3);                  // [3,N,cz]
        auto feat = reshape(permute(win, {1, 0, 2}), {N, 3 * cz});
        h1[static_cast<std::size_t>(t)] = silu(linear(feat, te_w1_, te_b1_));
    }
    Tensor zero_row = Tensor::zeros({N, th});
    // causal conv k=5 stride 4: latent i reads h1 rows 4i-4 .. 4i
    std::vector<Tensor> latents;
    latents.reserve(static_cast<std::size_t>(tlat));
    for (int i = 0; i < tlat; ++i) {
        std::vector<Tensor> window;
        window.reserve(5);
        for (int d = -4; d <= 0; ++d) {
            int j = kTemporalFactor * i + d;
            window.push_back((j >= 0 && j < T) ? h1[static_cast<std::size_t>(j)] : zero_row);
        }
        auto feat = concat(window, 1);  // [N, 5*th]
        auto hid = silu(linear(feat, te_w2_, te_b2_));
        auto out = linear(hid, te_w3_, te_b3_);  // [N, cz]
        latents.push_back(reshape(out, {1, N, cz}));
    }
    return reshape(concat(latents, 0), {tlat, h, w, cz});
}

Tensor VideoCodec::decode_temporal(const Tensor& z3d, int target_frames) const {
    if (z3d.ndim() != 4) throw DimensionError("decode_temporal: expects [T',h,w,Cz]");
    int tlat = z3d.shape()[0], h = z3d.shape()[1], w = z3d.shape()[2], cz = z3d.shape()[3];
    if (cz != cfg_.latent_channels) throw DimensionError("decode_temporal: channel mismatch");
    int max_frames = 1 + kTemporalFactor * (tlat - 1) + (kTemporalFactor - 1);
    if (target_frames < 1 || target_frames > max_frames)
        throw GeometryError("decode_temporal: " + std::to_string(target_frames) +
                            " frames inconsistent with " + std::to_string(tlat) + " latents");
    int N = h * w;
    auto z = reshape(z3d, {tlat, N, cz});
    std::vector<Tensor> rows(static_cast<std::size_t>(tlat));
    for (int i = 0; i < tlat; ++i) rows[static_cast<std::size_t>(i)] = reshape(slice(z, 0, i, 1), {N, cz});
    Tensor zero_row = Tensor::zeros({N, cz});

    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(target_frames));
    for (int j = 0; j < target_frames; ++j) {
        int i = latent_index_of_frame(j, tlat);
        int phase = j == 0 ? 0 : ((j - 1) % kTemporalFactor) + 1;
        auto prev = i >= 1 ? rows[static_cast<std::size_t>(i - 1)] : zero_row;
        auto feat = concat(std::vector<Tensor>{rows[static_cast<std::size_t>(i)], prev}, 1);
        auto hid = silu(linear(feat, td_wp_[static_cast<std::size_t>(phase)],
                               td_bp_[static_cast<std::size_t>(phase)]));
        hid = silu(linear(hid, td_w2_, td_b2_));
        auto out = linear(hid, td_w3_, td_b3_);
        frames.push_back(reshape(out, {1, N, cz}));
    }
    return reshape(concat(frames, 0), {target_frames, h, w, cz});
}

Tensor VideoCodec::decode_spatial(const Tensor& z2d) const {
    if (z2d.ndim() != 4) throw DimensionError("decode_spatial: expects [T,h,w,Cz]");
    int T = z2d.shape()[0], h = z2d.shape()[1], w = z2d.shape()[2], cz = z2d.shape()[3];
    if (cz != cfg_.latent_channels) throw DimensionError("decode_spatial: channel mismatch");
    auto flat = reshape(z2d, {T * h * w, cz});
    auto h1 = silu(linear(flat, sd_w1_, sd_b1_));
    auto h2 = silu(linear(h1, sd_w2_, sd_b2_));
    auto patches = linear(h2, sd_w3_, sd_b3_);  // [T*h*w, 192]
    auto tokens = reshape(patches, {T, h * w, kSpatialFactor * kSpatialFactor * 3});
    return unpatchify(tokens, h, w, kSpatialFactor, 3);
}

Tensor VideoCodec::identity_loss(const Tensor& z3d, const Tensor& z2d) const {
    if (z3d.ndim() != 4 || z2d.ndim() != 4)
        throw DimensionError("identity_loss: expects rank-4 latents");
    if (z3d.shape()[1] != z2d.shape()[1] || z3d.shape()[2] != z2d.shape()[2] ||
        z3d.shape()[3] != z2d.shape()[3])
        throw DimensionError("identity_loss: spatial/channel shapes differ");
    int T = z2d.shape()[0];
    int tlat = z3d.shape()[0];
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(T));
    for (int j = 0; j < T; ++j)
        rows.push_back(slice(z3d, 0, latent_index_of_frame(j, tlat), 1));
    auto broadcast = concat(rows, 0);  // [T,h,w,cz]
    return mse(broadcast, z2d);
}

LatentVideo VideoCodec::encode(const VideoTensor& v) const {
    NoGradGuard ng;
    auto z = encode_temporal(encode_spatial(v.to_tensor()));
    return LatentVideo::from_tensor(z, stats);
}

VideoTensor VideoCodec::decode(const LatentVideo& z, int target_frames) const {
    NoGradGuard ng;
    auto pixels = clamp01(decode_spatial(decode_temporal(z.to_tensor(), target_frames)));
    return VideoTensor::from_tensor(pixels);
}

VideoTensor VideoCodec::roundtrip(const VideoTensor& v) const {
    return decode(encode(v), v.frames);
}

void VideoCodec::collect_spatial(ParamSet& out) {
    out.add("codec.se.w1", &se_w1_);
    out.add("codec.se.b1", &se_b1_);
    out.add("codec.se.w2", &se_w2_);
    out.add("codec.se.b2", &se_b2_);
    out.add("codec.se.w3", &se_w3_);
    out.add("codec.se.b3", &se_b3_);
    out.add("codec.sd.w1", &sd_w1_);
    out.add("codec.sd.b1", &sd_b1_);
    out.add("codec.sd.w2", &sd_w2_);
    out.add("codec.sd.b2", &sd_b2_);
    out.add("codec.sd.w3", &sd_w3_);
    out.add("codec.sd.b3", &sd_b3_);
}

void VideoCodec::collect_temporal(ParamSet& out) {
    out.add("codec.te.w1", &te_w1_);
    out.add("codec.te.b1", &te_b1_);
    out.add("codec.te.w2", &te_w2_);
    out.add("codec.te.b2", &te_b2_);
    out.add("codec.te.w3", &te_w3_);
    out.add("codec.te.b3", &te_b3_);
    for (int p = 0; p < 5; ++p) {
        out.add("codec.td.wp" + std::to_string(p), &td_wp_[static_cast<std::size_t>(p)]);
        out.add("codec.td.bp" + std::to_string(p), &td_bp_[static_cast<std::size_t>(p)]);
    }
    out.add("codec.td.w2", &td_w2_);
    out.add("codec.td.b2", &td_b2_);
    out.add("codec.td.w3", &td_w3_);
    out.add("codec.td.b3", &td_b3_);
}

void VideoCodec::collect(ParamSet& out) {
    collect_spatial(out);
    collect_temporal(out);
}

std::vector<VideoTensor> segment_clips(const VideoTensor& v) {
    std::vector<VideoTensor> out;
    for (int start = 0; start < v.frames; start += kClipFrames) {
        int len = std::min(kClipFrames, v.frames - start);
        out.push_back(v.frame_range(start, len));
    }
    return out;
}

namespace {

std::vector<double> gaussian_window(int radius, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        w[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace

VideoMetrics compute_metrics(const VideoTensor& a, const VideoTensor& b) {
    if (a.frames != b.frames || a.height != b.height || a.width != b.width ||
        a.channels != b.channels)
        throw DimensionError("compute_metrics: shape mismatch");

    double mse_acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        mse_acc += d * d;
    }
    mse_acc /= static_cast<double>(a.data.size());
    double psnr = mse_acc <= 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse_acc));

    // SSIM, 11x11 Gaussian window (sigma 1.5) valid-region convolution
    const int radius = std::min({5, (a.height - 1) / 2, (a.width - 1) / 2});
    auto win = gaussian_window(radius, 1.5);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double ssim_acc = 0.0;
    std::size_t ssim_n = 0;
    for (int t = 0; t < a.frames; ++t)
        for (int c = 0; c < a.channels; ++c)
            for (int y = radius; y < a.height - radius; ++y)
                for (int x = radius; x < a.width - radius; ++x) {
                    double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                    for (int dy = -radius; dy <= radius; ++dy)
                        for (int dx = -radius; dx <= radius; ++dx) {
                            double wgt = win[static_cast<std::size_t>(dy + radius)] *
                                         win[static_cast<std::size_t>(dx + radius)];
                            double pa = a.at(t, y + dy, x + dx, c);
                            double pb = b.at(t, y + dy, x + dx, c);
                            ma += wgt * pa;
                            mb += wgt * pb;
                            va += wgt * pa * pa;
                            vb += wgt * pb * pb;
                            cov += wgt * pa * pb;
                        }
                    va -= ma * ma;
                    vb -= mb * mb;
                    cov -= ma * mb;
                    double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                               ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ssim_acc += s;
                    ++ssim_n;
                }
    double ssim = ssim_n ? ssim_acc / static_cast<double>(ssim_n) : 1.0;
    return {ssim, psnr};
}

ChannelStats fit_channel_stats(const std::vector<LatentVideo>& latents) {
    if (latents.empty()) throw ValueError("fit_channel_stats: empty latent set");
    int cz = latents[0].channels;
    std::vector<double> sum(static_cast<std::size_t>(cz), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(cz), 0.0);
    std::size_t count = 0;
    for (const auto& z : latents) {
        if (z.channels != cz) throw DimensionError("fit_channel_stats: channel mismatch");
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            int c = static_cast<int>(i % static_cast<std::size_t>(cz));
            sum[static_cast<std::size_t>(c)] += z.data[i];
            sq[static_cast<std::size_t>(c)] += static_cast<double>(z.data[i]) * z.data[i];
        }
        count += z.data.size() / static_cast<std::size_t>(cz);
    }
    ChannelStats st;
    st.mean.resize(static_cast<std::size_t>(cz));
    st.stddev.resize(static_cast<std::size_t>(cz));
    for (int c = 0; c < cz; ++c) {
        double m = sum[static_cast<std::size_t>(c)] / static_cast<double>(count);
        double var = sq[static_cast<std::size_t>(c)] / static_cast<double>(count) - m * m;
        double sd = std::sqrt(std::max(var, 0.0));
        if (!(sd > 0.0)) throw ValueError("fit_channel_stats: degenerate channel std");
        st.mean[static_cast<std::size_t>(c)] = static_cast<float>(m);
        st.stddev[static_cast<std::size_t>(c)] = static_cast<float>(sd);
    }
    return st;
}

Tensor codec_feature_loss(const VideoCodec& codec, const VideoTensor& clip, int stage,
                          float identity_weight) {
    if (stage != 1 && stage != 2) throw ValueError("codec_feature_loss: stage must be 1 or 2");
    Tensor z2d;
    {
        NoGradGuard ng;  // spatial path frozen in stages 1-2
        z2d = codec.encode_spatial(clip.to_tensor());
    }
    auto z3d = codec.encode_temporal(z2d);
    auto rec = codec.decode_temporal(z3d, clip.frames);
    auto loss = mse(rec, z2d);
    if (stage == 1 && identity_weight > 0.0f)
        loss = add(loss, mul_scalar(codec.identity_loss(z3d, z2d),
                                    static_cast<double>(identity_weight)));
    return loss;
}

Tensor codec_pixel_loss(const VideoCodec& codec, const VideoTensor& clip) {
    auto x = clip.to_tensor();
    auto z = codec.encode_temporal(codec.encode_spatial(x));
    auto rec = codec.decode_spatial(codec.decode_temporal(z, clip.frames));
    return mse(rec, x);
}

// ----------------------------------------------------------------- training

namespace {

// Clip lengths used for stage-3 mixed-length robustness.
constexpr int kMixedLengths[] = {1, 5, 9, 13, 17};

VideoTensor sample_clip(const std::vector<VideoTensor>& clips, Rng& rng, int max_frames) {
    const VideoTensor& src = clips[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(clips.size())))];
    int len = std::min(max_frames, src.frames);
    int start = src.frames > len ? rng.uniform_int(src.frames - len + 1) : 0;
    return src.frame_range(start, len);
}

}  // namespace

CodecTrainResult codec_train(VideoCodec& codec, const std::vector<VideoTensor>& clips,
                             const CodecTrainConfig& cfg,
                             const std::function<void(int, double)>& on_step) {
    if (clips.empty()) throw ValueError("codec_train: empty clip set");
    CodecTrainResult result;
    Rng rng(cfg.seed);
    Rng data_rng = rng.fork("codec-data");

    ParamSet spatial_params, temporal_params, all_params;
    codec.collect_spatial(spatial_params);
    codec.collect_temporal(temporal_params);
    codec.collect(all_params);

    Adam opt_spatial({cfg.lr, 0.9, 0.999, cfg.adam_eps});
    Adam opt_temporal({cfg.lr, 0.9, 0.999, cfg.adam_eps});
    Adam opt_all({cfg.lr, 0.9, 0.999, cfg.adam_eps});

    int global_step = 0;
    auto log_step = [&](double loss) {
        result.loss_log.push_back(loss);
        if (on_step) on_step(global_step, loss);
        ++global_step;
    };

    // Round-trip eval on a fixed batch (pixel path, full stack).
    std::vector<VideoTensor> eval_batch;
    {
        Rng eval_rng = rng.fork("codec-eval");
        for (int i = 0; i < 4; ++i)
            eval_batch.push_back(sample_clip(clips, eval_rng, kClipFrames));
    }
    auto eval_roundtrip = [&]() {
        NoGradGuard ng;
        double acc = 0.0;
        for (const auto& v : eval_batch) {
            VideoTensor r = codec.roundtrip(v);
            double m = 0.0;
            for (std::size_t i = 0; i < v.data.size(); ++i) {
                double d = static_cast<double>(v.data[i]) - r.data[i];
                m += d * d;
            }
            acc += m / static_cast<double>(v.data.size());
        }
        return acc / static_cast<double>(eval_batch.size());
    };
    result.eval_log.emplace_back(0, eval_roundtrip());

    // Spatial warm-up: the 2D path plays the role of a pretrained image
    // autoencoder before the frozen stages.
    codec.set_stage(1, true);
    for (int s = 0; s < cfg.spatial_pretrain_steps; ++s) {
        std::vector<Tensor> losses;
        for (int b = 0; b < cfg.batch; ++b) {
            VideoTensor clip = sample_clip(clips, data_rng, 1);
            auto x = clip.to_tensor();
            auto rec = codec.decode_spatial(codec.encode_spatial(x));
            losses.push_back(mse(rec, x));
        }
        auto loss = mul_scalar(sum_all(concat(losses, 0)), 1.0 / cfg.batch);
        backward(loss);
        opt_spatial.step(spatial_params);
        log_step(loss.item());
    }

    // Stage 1: spatial frozen; temporal reconstructs spatial features with
    // the identity alignment term.
    // Stage 2: identity term removed.
    for (int stage = 1; stage <= 2; ++stage) {
        codec.set_stage(stage, true);
        int steps = stage == 1 ? cfg.stage1_steps : cfg.stage2_steps;
        for (int s = 0; s < steps; ++s) {
            std::vector<Tensor> losses;
            for (int b = 0; b < cfg.batch; ++b) {
                bool video = data_rng.uniform() < cfg.video_fraction;
                VideoTensor clip = sample_clip(clips, data_rng, video ? kClipFrames : 1);
                losses.push_back(codec_feature_loss(codec, clip, stage, cfg.identity_weight));
            }
            auto loss = mul_scalar(sum_all(concat(losses, 0)), 1.0 / cfg.batch);
            backward(loss);
            opt_temporal.step(temporal_params);
            log_step(loss.item());
        }
    }

    // Stage 3: direct pixel reconstruction, mixed clip lengths, everything
    // trainable.
    codec.set_stage(3, false);
    for (int s = 0; s < cfg.stage3_steps; ++s) {
        std::vector<Tensor> losses;
        for (int b = 0; b < cfg.batch; ++b) {
            int len = kMixedLengths[data_rng.uniform_int(5)];
            VideoTensor clip = sample_clip(clips, data_rng, len);
            losses.push_back(codec_pixel_loss(codec, clip));
        }
        auto loss = mul_scalar(sum_all(concat(losses, 0)), 1.0 / cfg.batch);
        backward(loss);
        opt_all.step(all_params);
        log_step(loss.item());
        if ((global_step % 100) == 0) result.eval_log.emplace_back(global_step, eval_roundtrip());
    }
    if (result.eval_log.back().first != global_step)
        result.eval_log.emplace_back(global_step, eval_roundtrip());

    // Fit normalization stats on the training clips.
    std::vector<LatentVideo> latents;
    {
        NoGradGuard ng;
        for (const auto& clip : clips)
            for (const auto& seg : segment_clips(clip)) latents.push_back(codec.encode(seg));
    }
    codec.stats = fit_channel_stats(latents);
    return result;
}

}  // namespace sora
