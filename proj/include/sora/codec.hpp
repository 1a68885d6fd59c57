#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "sora/optim.hpp"
#include "sora/ops.hpp"
#include "sora/video.hpp"

namespace sora {

constexpr int kSpatialFactor = 8;
constexpr int kTemporalFactor = 4;
constexpr int kClipFrames = 17;

// Latent frame count for a clip of `frames` pixel frames: frame 0 maps to
// latent 0, every following group of 4 frames to one more latent frame.
inline int latent_frames_for(int frames) {
    if (frames < 1) throw GeometryError("clip needs at least one frame");
    return 1 + (frames - 1 + kTemporalFactor - 1) / kTemporalFactor;
}

// Latent index a pixel frame decodes from.
inline int latent_index_of_frame(int frame, int latent_frames) {
    int idx = frame == 0 ? 0 : (frame + kTemporalFactor - 1) / kTemporalFactor;
    return std::min(idx, latent_frames - 1);
}

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;

    bool empty() const { return mean.empty(); }
    int channels() const { return static_cast<int>(mean.size()); }
};

// Compressed video: T' x H/8 x W/8 x Cz, plus the channel statistics used
// for normalization in flow training.
struct LatentVideo {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    ChannelStats stats;

    LatentVideo() = default;
    LatentVideo(int t, int h, int w, int c);

    float& at(int t, int y, int x, int c) {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
    }
    float at(int t, int y, int x, int c) const {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
    }

    Tensor to_tensor() const;
    static LatentVideo from_tensor(const Tensor& t, ChannelStats stats = {});
};

// VTEN plus a sidecar "<path>.stats" text header with per-channel mean/std.
void latent_save(const std::filesystem::path& path, const LatentVideo& z);
LatentVideo latent_load(const std::filesystem::path& path);

struct CodecConfig {
    int latent_channels = 4;
    int spatial_hidden = 32;
    int temporal_hidden = 16;
    float identity_weight = 1.0f;
    int stage = 1;  // {1,2,3}
    bool freeze_spatial = false;

    void validate() const {
        if (stage < 1 || stage > 3) throw ValueError("codec stage must be 1, 2 or 3");
        if (latent_channels < 1 || spatial_hidden < 1 || temporal_hidden < 1)
            throw ValueError("codec widths must be positive");
    }
};

// Stacked video codec: per-frame spatial 8x8 compression followed by a
// causal temporal 4x stage. Latent frame i never depends on pixel frames
// with index >= 1 + 4i.
class VideoCodec {
  public:
    VideoCodec(CodecConfig cfg, Rng rng);

    const CodecConfig& config() const { return cfg_; }
    void set_stage(int stage, bool freeze_spatial);

    // Graph-building paths (differentiable).
    Tensor encode_spatial(const Tensor& video) const;   // [T,H,W,C] -> [T,h,w,Cz]
    Tensor encode_temporal(const Tensor& z2d) const;    // [T,h,w,Cz] -> [T',h,w,Cz]
    Tensor decode_temporal(const Tensor& z3d, int target_frames) const;
    Tensor decode_spatial(const Tensor& z2d) const;     // [T,h,w,Cz] -> [T,H,W,C], unclamped

    // Identity alignment between temporal latents (broadcast to T frames)
    // and the per-frame spatial features they compress.
    Tensor identity_loss(const Tensor& z3d, const Tensor& z2d) const;

    // Whole-pipeline convenience (no grad, decode clamped to [0,1]).
    LatentVideo encode(const VideoTensor& v) const;
    VideoTensor decode(const LatentVideo& z, int target_frames) const;
    VideoTensor roundtrip(const VideoTensor& v) const;

    void collect_spatial(ParamSet& out);
    void collect_temporal(ParamSet& out);
    void collect(ParamSet& out);

    ChannelStats stats;  // fitted on the training latents after codec-train

  private:
    CodecConfig cfg_;

    // spatial encoder / decoder MLPs over 8x8 patches
    Tensor se_w1_, se_b1_, se_w2_, se_b2_, se_w3_, se_b3_;
    Tensor sd_w1_, sd_b1_, sd_w2_, sd_b2_, sd_w3_, sd_b3_;
    // temporal encoder: causal conv k=3 s=1, causal conv k=5 s=4, pointwise
    Tensor te_w1_, te_b1_, te_w2_, te_b2_, te_w3_, te_b3_;
    // temporal decoder: per-phase input layer, shared trunk
    std::vector<Tensor> td_wp_, td_bp_;  // 5 phases
    Tensor td_w2_, td_b2_, td_w3_, td_b3_;
};

// Consecutive 17-frame chunks; the final chunk may be shorter. Concatenating
// the chunks reproduces the input.
std::vector<VideoTensor> segment_clips(const VideoTensor& v);

struct VideoMetrics {
    double ssim = 0.0;
    double psnr = 0.0;
};

// Windowed SSIM (11x11 Gaussian, per frame, averaged) and PSNR in dB for
// [0,1] range; PSNR capped at 100 for identical inputs.
VideoMetrics compute_metrics(const VideoTensor& a, const VideoTensor& b);

// Per-channel moments over a set of latents.
ChannelStats fit_channel_stats(const std::vector<LatentVideo>& latents);

// Stage 1/2 training objective: temporal stack reconstructs the (frozen)
// spatial features; the identity alignment term participates only in stage 1.
Tensor codec_feature_loss(const VideoCodec& codec, const VideoTensor& clip, int stage,
                          float identity_weight);

// Stage 3 objective: direct pixel reconstruction through the full stack.
Tensor codec_pixel_loss(const VideoCodec& codec, const VideoTensor& clip);

// ------------------------------------------------------------- toy training

struct CodecTrainConfig {
    int spatial_pretrain_steps = 300;
    int stage1_steps = 250;
    int stage2_steps = 150;
    int stage3_steps = 500;
    int batch = 4;
    double lr = 2e-3;
    double adam_eps = 1e-8;
    float identity_weight = 1.0f;
    double video_fraction = 0.8;  // stages 1-2 data mix; rest are T=1 images
    std::uint64_t seed = 1;
};

struct CodecTrainResult {
    std::vector<double> loss_log;                  // per step
    std::vector<std::pair<int, double>> eval_log;  // (step, round-trip mse)
};

// Staged codec training on in-memory clips; fits `codec.stats` at the end.
CodecTrainResult codec_train(VideoCodec& codec, const std::vector<VideoTensor>& clips,
                             const CodecTrainConfig& cfg,
                             const std::function<void(int, double)>& on_step = nullptr);

}  // namespace sora
