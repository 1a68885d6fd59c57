#pragma once

#include <functional>
#include <vector>

#include "sora/codec.hpp"
#include "sora/conditioning.hpp"
#include "sora/ops.hpp"

// Rectified-flow objective and sampler. The forward path is a straight line
// x_t = (1 - t) x0 + t x1 between data (t=0) and noise (t=1); the model
// regresses the constant velocity x1 - x0 and sampling integrates the ODE
// from t=1 to t=0 with uniform Euler steps.

namespace sora {

struct FlowConfig {
    int steps = 30;
    double logit_m = 0.0;
    double logit_s = 1.0;
    double reference_tokens = 20.0;  // 240p / 16-frame bucket token count
    double lr = 5e-5;
    double adam_eps = 1e-15;

    void validate() const {
        if (steps < 1) throw ValueError("flow: steps must be >= 1");
        if (!(logit_s > 0.0)) throw ValueError("flow: logit-normal scale must be positive");
        if (!(lr > 0.0)) throw ValueError("flow: learning rate must be positive");
        if (!(reference_tokens >= 1.0)) throw ValueError("flow: reference token count >= 1");
    }
};

// Per-frame linear interpolation along axis 0; t values in [0,1].
Tensor interpolate(const Tensor& x0, const Tensor& x1, const std::vector<double>& t);

inline Tensor velocity_target(const Tensor& x0, const Tensor& x1) { return sub(x1, x0); }

// Logit-normal draw pushed through the resolution-aware shift
// t = a*u / (1 + (a-1)*u), a = sqrt(tokens / reference). Always in (0,1).
double sample_timestep(Rng& rng, const FlowConfig& cfg, double token_count);

// Per-channel standardization (channel = last axis).
Tensor channel_normalize(const Tensor& z, const ChannelStats& stats);
Tensor channel_denormalize(const Tensor& z, const ChannelStats& stats);

// Velocity field adapter: x and per-frame timesteps -> predicted velocity.
using VelocityFn = std::function<Tensor(const Tensor& x, const std::vector<double>& t)>;

// One training-loss evaluation: draws t, noises the masked frames, keeps
// conditioning frames clean at t=0 and excludes them from the loss.
Tensor flow_training_loss(const VelocityFn& model, const Tensor& x0, const FrameMask& mask,
                          const FlowConfig& cfg, double token_count, Rng& rng);

// Timestep grid used for validation: midpoints of 10 equal bins.
std::vector<double> validation_timesteps();

// Deterministic validation loss averaged over the 10 fixed timesteps; noise
// derives from `noise_seed` only.
double flow_validation_loss(const VelocityFn& model, const Tensor& x0, const FrameMask& mask,
                            std::uint64_t noise_seed);

struct SampleConditioning {
    Tensor latent;               // ground-truth latent in the model's space
    std::vector<char> unmasked;  // per-frame conditioning flags
};

// Euler integration from noise (t=1) to data (t=0). Conditioned frames are
// overwritten with their ground-truth latent at every step, including the
// final state.
Tensor euler_sample(const VelocityFn& model, const Shape& shape, const SampleConditioning* cond,
                    int steps, Rng& rng);

}  // namespace sora
