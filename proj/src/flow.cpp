#include "sora/flow.hpp"

#include <cmath>

namespace sora {

namespace {

// Constant per-frame weights shaped for broadcasting over [T, ...rest].
Tensor frame_weights(const Shape& shape, const std::vector<double>& w) {
    Shape ws(shape.size(), 1);
    ws[0] = shape[0];
    std::vector<float> data(w.begin(), w.end());
    return broadcast_to(Tensor::from_data(std::move(ws), std::move(data)), shape);
}

}  // namespace

Tensor interpolate(const Tensor& x0, const Tensor& x1, const std::vector<double>& t) {
    if (x0.shape() != x1.shape()) throw DimensionError("interpolate: shape mismatch");
    if (static_cast<int>(t.size()) != x0.shape()[0])
        throw DimensionError("interpolate: one timestep per frame required");
    for (double v : t)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("interpolate: t must be in [0,1]");
    std::vector<double> one_minus(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) one_minus[i] = 1.0 - t[i];
    auto a = mul(x0, frame_weights(x0.shape(), one_minus));
    auto b = mul(x1, frame_weights(x1.shape(), t));
    return add(a, b);
}

double sample_timestep(Rng& rng, const FlowConfig& cfg, double token_count) {
    cfg.validate();
    if (!(token_count >= 1.0)) throw DomainError("sample_timestep: token_count must be >= 1");
    double z = rng.normal(cfg.logit_m, cfg.logit_s);
    double u = 1.0 / (1.0 + std::exp(-z));
    double alpha = std::sqrt(token_count / cfg.reference_tokens);
    return alpha * u / (1.0 + (alpha - 1.0) * u);
}

namespace {

void check_stats(const Tensor& z, const ChannelStats& stats) {
    if (z.ndim() < 1) throw DimensionError("channel stats: tensor required");
    int c = z.shape().back();
    if (stats.channels() != c)
        throw DimensionError("channel stats: expected " + std::to_string(c) + " channels, got " +
                             std::to_string(stats.channels()));
    for (float s : stats.stddev)
        if (!(s > 0.0f)) throw ValueError("channel stats: degenerate std");
}

}  // namespace

Tensor channel_normalize(const Tensor& z, const ChannelStats& stats) {
    check_stats(z, stats);
    std::size_t c = static_cast<std::size_t>(z.shape().back());
    std::vector<float> out(z.numel());
    auto zv = z.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t ch = i % c;
        out[i] = static_cast<float>((static_cast<double>(zv[i]) - stats.mean[ch]) /
                                    stats.stddev[ch]);
    }
    return Tensor::from_data(z.shape(), std::move(out));
}

Tensor channel_denormalize(const Tensor& z, const ChannelStats& stats) {
    check_stats(z, stats);
    std::size_t c = static_cast<std::size_t>(z.shape().back());
    std::vector<float> out(z.numel());
    auto zv = z.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t ch = i % c;
        out[i] = static_cast<float>(static_cast<double>(zv[i]) * stats.stddev[ch] +
                                    stats.mean[ch]);
    }
    return Tensor::from_data(z.shape(), std::move(out));
}

Tensor flow_training_loss(const VelocityFn& model, const Tensor& x0, const FrameMask& mask,
                          const FlowConfig& cfg, double token_count, Rng& rng) {
    int frames = x0.shape()[0];
    if (mask.frames() != frames) throw DimensionError("flow loss: mask/frame count mismatch");
    if (mask.masked_count() == 0)
        throw ValueError("flow loss: at least one frame must be diffused");

    double t = sample_timestep(rng, cfg, token_count);
    std::vector<double> t_frames = assign_timesteps(mask, t);

    Tensor x1;
    {
        NoGradGuard ng;
        Rng noise = rng.fork("noise", rng.next_u64());
        x1 = Tensor::randn(x0.shape(), noise);
    }
    Tensor x_t, v;
    {
        NoGradGuard ng;
        x_t = interpolate(x0, x1, t_frames);
        v = velocity_target(x0, x1);
    }
    auto pred = model(x_t, t_frames);
    if (pred.shape() != x0.shape()) throw DimensionError("flow loss: model output shape mismatch");

    std::vector<double> w(static_cast<std::size_t>(frames), 0.0);
    for (int f = 0; f < frames; ++f)
        if (!mask.is_conditioning(f)) w[static_cast<std::size_t>(f)] = 1.0;
    double denom = static_cast<double>(mask.masked_count()) *
                   (static_cast<double>(x0.numel()) / frames);
    auto weighted = mul(square(sub(pred, v)), frame_weights(x0.shape(), w));
    return mul_scalar(sum_all(weighted), 1.0 / denom);
}

std::vector<double> validation_timesteps() {
    std::vector<double> out;
    for (int i = 0; i < 10; ++i) out.push_back(0.05 + 0.1 * i);
    return out;
}

double flow_validation_loss(const VelocityFn& model, const Tensor& x0, const FrameMask& mask,
                            std::uint64_t noise_seed) {
    NoGradGuard ng;
    int frames = x0.shape()[0];
    if (mask.frames() != frames) throw DimensionError("flow loss: mask/frame count mismatch");
    if (mask.masked_count() == 0)
        throw ValueError("flow loss: at least one frame must be diffused");
    std::vector<double> w(static_cast<std::size_t>(frames), 0.0);
    for (int f = 0; f < frames; ++f)
        if (!mask.is_conditioning(f)) w[static_cast<std::size_t>(f)] = 1.0;
    double denom = static_cast<double>(mask.masked_count()) *
                   (static_cast<double>(x0.numel()) / frames);

    double acc = 0.0;
    auto grid = validation_timesteps();
    Rng base(noise_seed);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Rng noise = base.fork("val-noise", i);
        auto x1 = Tensor::randn(x0.shape(), noise);
        auto t_frames = assign_timesteps(mask, grid[i]);
        auto x_t = interpolate(x0, x1, t_frames);
        auto v = velocity_target(x0, x1);
        auto pred = model(x_t, t_frames);
        auto weighted = mul(square(sub(pred, v)), frame_weights(x0.shape(), w));
        acc += static_cast<double>(sum_all(weighted).item()) / denom;
    }
    return acc / static_cast<double>(grid.size());
}

Tensor euler_sample(const VelocityFn& model, const Shape& shape, const SampleConditioning* cond,
                    int steps, Rng& rng) {
    if (steps < 1) throw ValueError("euler_sample: steps must be >= 1");
    NoGradGuard ng;
    int frames = shape[0];
    std::vector<char> unmasked(static_cast<std::size_t>(frames), 0);
    if (cond) {
        if (cond->latent.shape() != shape)
            throw DimensionError("euler_sample: conditioning latent shape mismatch");
        if (static_cast<int>(cond->unmasked.size()) != frames)
            throw DimensionError("euler_sample: conditioning mask length mismatch");
        unmasked = cond->unmasked;
    }

    std::size_t frame_len = shape_numel(shape) / static_cast<std::size_t>(frames);
    auto overwrite = [&](std::vector<float>& data) {
        if (!cond) return;
        auto src = cond->latent.data();
        for (int f = 0; f < frames; ++f)
            if (unmasked[static_cast<std::size_t>(f)])
                std::copy_n(src.data() + static_cast<std::size_t>(f) * frame_len, frame_len,
                            data.data() + static_cast<std::size_t>(f) * frame_len);
    };

    Rng noise = rng.fork("sample-noise", rng.next_u64());
    auto x = Tensor::randn(shape, noise);
    {
        std::vector<float> data(x.data().begin(), x.data().end());
        overwrite(data);
        x = Tensor::from_data(shape, std::move(data));
    }

    double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        double t_now = 1.0 - k * dt;
        std::vector<double> t_frames(static_cast<std::size_t>(frames), t_now);
        for (int f = 0; f < frames; ++f)
            if (unmasked[static_cast<std::size_t>(f)]) t_frames[static_cast<std::size_t>(f)] = 0.0;
        auto v = model(x, t_frames);
        auto next = sub(x, mul_scalar(v, dt));
        std::vector<float> data(next.data().begin(), next.data().end());
        overwrite(data);
        x = Tensor::from_data(shape, std::move(data));
    }
    return x;
}

}  // namespace sora
