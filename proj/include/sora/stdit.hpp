#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sora/optim.hpp"
#include "sora/ops.hpp"

// Spatial-Temporal Diffusion Transformer. Attention is factored into
// per-frame spatial self-attention and per-location temporal attention with
// rotary embeddings; text enters through cross-attention. Per-frame timestep
// and FPS conditioning modulate each block through adaptive layer norm.

namespace sora {

struct StditConfig {
    int dim = 16;
    int heads = 2;
    int blocks = 2;
    int mlp_ratio = 4;
    int patch = 2;
    int latent_channels = 4;
    int text_dim = 32;
    int time_basis = 32;       // sinusoidal basis width for t / fps embeddings
    int pos_max_h = 16;        // learned spatial table covers up to this grid
    int pos_max_w = 16;
    double rope_base = 10000.0;
    double qk_eps = 1e-15;

    int head_dim() const { return dim / heads; }

    void validate() const {
        if (dim < 2 || heads < 1 || blocks < 1) throw ValueError("stdit: bad model dims");
        if (dim % heads != 0) throw ValueError("stdit: heads must divide dim");
        if (head_dim() % 2 != 0) throw ValueError("stdit: head_dim must be even for rope");
        if (patch < 1 || latent_channels < 1) throw ValueError("stdit: bad patch geometry");
        if (qk_eps <= 0.0) throw ValueError("stdit: qk_eps must be positive");
    }
};

// ------------------------------------------------------------------ rope

// cos/sin tables [positions, head_dim] in the rotate-half convention
// (pair (j, j + head_dim/2) shares frequency base^(-2j/head_dim)).
template <class R>
std::pair<TensorT<R>, TensorT<R>> rope_tables(int positions, int head_dim, double base) {
    int half = head_dim / 2;
    std::vector<R> cosv(static_cast<std::size_t>(positions) * head_dim);
    std::vector<R> sinv(static_cast<std::size_t>(positions) * head_dim);
    for (int p = 0; p < positions; ++p)
        for (int j = 0; j < half; ++j) {
            double theta = std::pow(base, -2.0 * j / head_dim);
            double a = p * theta;
            double c = std::cos(a), s = std::sin(a);
            std::size_t row = static_cast<std::size_t>(p) * head_dim;
            cosv[row + static_cast<std::size_t>(j)] = static_cast<R>(c);
            cosv[row + static_cast<std::size_t>(j + half)] = static_cast<R>(c);
            sinv[row + static_cast<std::size_t>(j)] = static_cast<R>(s);
            sinv[row + static_cast<std::size_t>(j + half)] = static_cast<R>(s);
        }
    return {TensorT<R>::from_data({positions, head_dim}, std::move(cosv)),
            TensorT<R>::from_data({positions, head_dim}, std::move(sinv))};
}

// x [N, head_dim] rotated by position-matched tables [N, head_dim].
template <class R>
TensorT<R> apply_rope(const TensorT<R>& x, const TensorT<R>& cos_t, const TensorT<R>& sin_t) {
    if (x.shape() != cos_t.shape() || x.shape() != sin_t.shape())
        throw DimensionError("apply_rope: table shape mismatch");
    int half = x.shape()[1] / 2;
    auto lo = slice(x, 1, 0, half);
    auto hi = slice(x, 1, half, half);
    auto rotated = concat(std::vector<TensorT<R>>{neg(hi), lo}, 1);
    return add(mul(x, cos_t), mul(rotated, sin_t));
}

// ------------------------------------------------------------------ qk-norm

// Rows scaled to unit L2 norm with an epsilon guard; zero rows stay zero.
template <class R>
TensorT<R> row_normalize(const TensorT<R>& x, double eps) {
    if (eps <= 0.0) throw DomainError("row_normalize: eps must be positive");
    auto norms = add_scalar(sora::sqrt(sum_axis(square(x), -1, /*keepdim=*/true)), eps);
    return div(x, broadcast_to(norms, x.shape()));
}

// Normalizes query and key head-vectors; attention applies its learned
// per-head temperature on top of this.
template <class R>
std::pair<TensorT<R>, TensorT<R>> qk_normalize(const TensorT<R>& q, const TensorT<R>& k,
                                               double eps = 1e-15) {
    return {row_normalize(q, eps), row_normalize(k, eps)};
}

// --------------------------------------------------------------- parameters

template <class R>
struct AttnParamsT {
    TensorT<R> wq, bq, wk, bk, wv, bv, wo, bo;
    TensorT<R> q_scale, k_scale;  // [heads], learned temperature after qk-norm
};

template <class R>
struct StditBlockT {
    AttnParamsT<R> spatial, temporal, cross;
    TensorT<R> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    TensorT<R> mod_w, mod_b;  // cond -> 6*dim modulation (adaLN-zero)
};

// Per-frame conditioning inputs for one clip.
struct Conditioning {
    std::vector<double> timesteps;  // per latent frame, each in [0,1]
    double fps = 4.0;
};

template <class R>
class StditModelT {
  public:
    StditConfig cfg;

    TensorT<R> patch_w, patch_b;
    TensorT<R> pos_table;  // [pos_max_h * pos_max_w, dim]
    TensorT<R> t_w1, t_b1, t_w2, t_b2;
    TensorT<R> fps_w1, fps_b1, fps_w2, fps_b2;
    TensorT<R> text_w, text_b;
    std::vector<StditBlockT<R>> blocks;
    TensorT<R> final_mod_w, final_mod_b;
    TensorT<R> head_w, head_b;
    TensorT<R> unit_gamma, zero_beta;  // constants for affine-free layer norm

    static StditModelT init(const StditConfig& cfg, Rng rng);

    // Zeroes the temporal attention output projections (weights and bias) so
    // a fresh video model reproduces the frame-wise image path exactly.
    void init_temporal_zero();

    // Velocity prediction on a latent grid [T', h, w, Cz].
    TensorT<R> predict_velocity(const TensorT<R>& latent, const Conditioning& cond,
                                const TensorT<R>& text_tokens) const;

    // Factored attention sub-ops on a token grid x [T, S, dim]; these are the
    // exact building blocks forward uses.
    TensorT<R> spatial_attention(int block, const TensorT<R>& x) const;
    TensorT<R> temporal_attention(int block, const TensorT<R>& x) const;
    TensorT<R> cross_attention(int block, const TensorT<R>& x,
                               const TensorT<R>& text_tokens) const;

    // Attention core shared by the three paths: queries from xq [N, dim],
    // keys/values from xkv [M, dim]; optional rope tables rotate q and k.
    TensorT<R> attention(const AttnParamsT<R>& p, const TensorT<R>& xq, const TensorT<R>& xkv,
                         const TensorT<R>* rope_cos, const TensorT<R>* rope_sin) const;

    void collect(ParamSet& out);

    std::size_t parameter_count() const;

  private:
    TensorT<R> token_embed(const TensorT<R>& latent, int gh, int gw) const;
    TensorT<R> condition_embed(const Conditioning& cond, int frames) const;
    TensorT<R> block_forward(int block, const TensorT<R>& x, const TensorT<R>& cond,
                             const TensorT<R>& text_kv) const;
};

using StditModel = StditModelT<float>;

StditModelT<double> cast_model_f64(const StditModel& m);

// Sinusoidal basis rows (computed in f64) for continuous scalar conditioning.
template <class R>
TensorT<R> sinusoidal_rows(const std::vector<double>& values, int basis, double scale) {
    int half = basis / 2;
    std::vector<R> out(values.size() * static_cast<std::size_t>(basis));
    for (std::size_t r = 0; r < values.size(); ++r)
        for (int j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(10000.0) * j / half);
            double a = values[r] * scale * freq;
            out[r * static_cast<std::size_t>(basis) + static_cast<std::size_t>(j)] =
                static_cast<R>(std::cos(a));
            out[r * static_cast<std::size_t>(basis) + static_cast<std::size_t>(j + half)] =
                static_cast<R>(std::sin(a));
        }
    return TensorT<R>::from_data({static_cast<int>(values.size()), basis}, std::move(out));
}

// ------------------------------------------------------------ implementation

namespace stdit_detail {

template <class R>
TensorT<R> init_weight(Rng& rng, int fan_in, int fan_out, double std = 0.02) {
    return TensorT<R>::randn({fan_in, fan_out}, rng, std, /*requires_grad=*/true);
}

template <class R>
AttnParamsT<R> init_attn(Rng& rng, int dim, int heads) {
    AttnParamsT<R> p;
    p.wq = init_weight<R>(rng, dim, dim);
    p.bq = TensorT<R>::zeros({dim}, true);
    p.wk = init_weight<R>(rng, dim, dim);
    p.bk = TensorT<R>::zeros({dim}, true);
    p.wv = init_weight<R>(rng, dim, dim);
    p.bv = TensorT<R>::zeros({dim}, true);
    p.wo = init_weight<R>(rng, dim, dim);
    p.bo = TensorT<R>::zeros({dim}, true);
    double temp = 1.0 / std::sqrt(static_cast<double>(dim / heads));
    p.q_scale = TensorT<R>::full({heads}, temp, true);
    p.k_scale = TensorT<R>::full({heads}, temp, true);
    return p;
}

}  // namespace stdit_detail

template <class R>
StditModelT<R> StditModelT<R>::init(const StditConfig& cfg, Rng rng) {
    cfg.validate();
    StditModelT<R> m;
    m.cfg = cfg;
    Rng wr = rng.fork("stdit-weights");
    int d = cfg.dim;
    int patch_in = cfg.patch * cfg.patch * cfg.latent_channels;

    m.patch_w = stdit_detail::init_weight<R>(wr, patch_in, d);
    m.patch_b = TensorT<R>::zeros({d}, true);
    m.pos_table = TensorT<R>::randn({cfg.pos_max_h * cfg.pos_max_w, d}, wr, 0.02, true);
    m.t_w1 = stdit_detail::init_weight<R>(wr, cfg.time_basis, d);
    m.t_b1 = TensorT<R>::zeros({d}, true);
    m.t_w2 = stdit_detail::init_weight<R>(wr, d, d);
    m.t_b2 = TensorT<R>::zeros({d}, true);
    m.fps_w1 = stdit_detail::init_weight<R>(wr, cfg.time_basis, d);
    m.fps_b1 = TensorT<R>::zeros({d}, true);
    m.fps_w2 = stdit_detail::init_weight<R>(wr, d, d);
    m.fps_b2 = TensorT<R>::zeros({d}, true);
    m.text_w = stdit_detail::init_weight<R>(wr, cfg.text_dim, d);
    m.text_b = TensorT<R>::zeros({d}, true);

    m.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (auto& b : m.blocks) {
        b.spatial = stdit_detail::init_attn<R>(wr, d, cfg.heads);
        b.temporal = stdit_detail::init_attn<R>(wr, d, cfg.heads);
        b.cross = stdit_detail::init_attn<R>(wr, d, cfg.heads);
        b.mlp_w1 = stdit_detail::init_weight<R>(wr, d, cfg.mlp_ratio * d);
        b.mlp_b1 = TensorT<R>::zeros({cfg.mlp_ratio * d}, true);
        b.mlp_w2 = stdit_detail::init_weight<R>(wr, cfg.mlp_ratio * d, d);
        b.mlp_b2 = TensorT<R>::zeros({d}, true);
        b.mod_w = TensorT<R>::zeros({d, 6 * d}, true);  // adaLN-zero
        b.mod_b = TensorT<R>::zeros({6 * d}, true);
    }
    m.final_mod_w = TensorT<R>::zeros({d, 2 * d}, true);
    m.final_mod_b = TensorT<R>::zeros({2 * d}, true);
    m.head_w = stdit_detail::init_weight<R>(wr, d, patch_in);
    m.head_b = TensorT<R>::zeros({patch_in}, true);
    m.unit_gamma = TensorT<R>::full({d}, 1.0);
    m.zero_beta = TensorT<R>::zeros({d});

    m.init_temporal_zero();
    return m;
}

template <class R>
void StditModelT<R>::init_temporal_zero() {
    int d = cfg.dim;
    for (auto& b : blocks) {
        b.temporal.wo = TensorT<R>::zeros({d, d}, true);
        b.temporal.bo = TensorT<R>::zeros({d}, true);
    }
}

template <class R>
TensorT<R> StditModelT<R>::attention(const AttnParamsT<R>& p, const TensorT<R>& xq,
                                     const TensorT<R>& xkv, const TensorT<R>* rope_cos,
                                     const TensorT<R>* rope_sin) const {
    int heads = cfg.heads;
    int dh = cfg.head_dim();
    auto q = linear(xq, p.wq, p.bq);
    auto k = linear(xkv, p.wk, p.bk);
    auto v = linear(xkv, p.wv, p.bv);
    std::vector<TensorT<R>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        auto qh = slice(q, 1, h * dh, dh);
        auto kh = slice(k, 1, h * dh, dh);
        auto vh = slice(v, 1, h * dh, dh);
        if (rope_cos) {
            qh = apply_rope(qh, *rope_cos, *rope_sin);
            kh = apply_rope(kh, *rope_cos, *rope_sin);
        }
        auto qn = row_normalize(qh, cfg.qk_eps);
        auto kn = row_normalize(kh, cfg.qk_eps);
        qn = mul(qn, broadcast_to(slice(p.q_scale, 0, h, 1), qn.shape()));
        kn = mul(kn, broadcast_to(slice(p.k_scale, 0, h, 1), kn.shape()));
        auto logits = matmul(qn, permute(kn, {1, 0}));
        auto attn = softmax(logits, 1);
        outs.push_back(matmul(attn, vh));
    }
    return linear(concat(outs, 1), p.wo, p.bo);
}

template <class R>
TensorT<R> StditModelT<R>::spatial_attention(int block, const TensorT<R>& x) const {
    if (x.ndim() != 3) throw DimensionError("spatial_attention: expects [T,S,D]");
    int T = x.shape()[0], S = x.shape()[1], d = x.shape()[2];
    const auto& b = blocks[static_cast<std::size_t>(block)];
    std::vector<TensorT<R>> frames;
    frames.reserve(static_cast<std::size_t>(T));
    for (int f = 0; f < T; ++f) {
        auto xf = reshape(slice(x, 0, f, 1), {S, d});
        frames.push_back(reshape(attention(b.spatial, xf, xf, nullptr, nullptr), {1, S, d}));
    }
    return concat(frames, 0);
}

template <class R>
TensorT<R> StditModelT<R>::temporal_attention(int block, const TensorT<R>& x) const {
    if (x.ndim() != 3) throw DimensionError("temporal_attention: expects [T,S,D]");
    int T = x.shape()[0], S = x.shape()[1], d = x.shape()[2];
    const auto& b = blocks[static_cast<std::size_t>(block)];
    auto [cos_t, sin_t] = rope_tables<R>(T, cfg.head_dim(), cfg.rope_base);
    auto by_loc = permute(x, {1, 0, 2});  // [S, T, D]
    std::vector<TensorT<R>> locs;
    locs.reserve(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
        auto xs = reshape(slice(by_loc, 0, s, 1), {T, d});
        locs.push_back(reshape(attention(b.temporal, xs, xs, &cos_t, &sin_t), {1, T, d}));
    }
    return permute(concat(locs, 0), {1, 0, 2});
}

template <class R>
TensorT<R> StditModelT<R>::cross_attention(int block, const TensorT<R>& x,
                                           const TensorT<R>& text_tokens) const {
    if (x.ndim() != 3) throw DimensionError("cross_attention: expects [T,S,D]");
    if (text_tokens.ndim() != 2 || text_tokens.shape()[0] < 1)
        throw ValueError("cross_attention: text must contain at least one token");
    int T = x.shape()[0], S = x.shape()[1], d = x.shape()[2];
    const auto& b = blocks[static_cast<std::size_t>(block)];
    auto kv = linear(text_tokens, text_w, text_b);
    auto flat = reshape(x, {T * S, d});
    return reshape(attention(b.cross, flat, kv, nullptr, nullptr), {T, S, d});
}

template <class R>
TensorT<R> StditModelT<R>::token_embed(const TensorT<R>& latent, int gh, int gw) const {
    int T = latent.shape()[0];
    auto tokens = patchify(latent, cfg.patch);  // [T, S, p*p*Cz]
    int S = tokens.shape()[1];
    auto flat = reshape(tokens, {T * S, tokens.shape()[2]});
    auto x = linear(flat, patch_w, patch_b);
    // learned absolute spatial positions: top-left sub-grid of the table
    std::vector<TensorT<R>> rows;
    rows.reserve(static_cast<std::size_t>(gh));
    for (int gy = 0; gy < gh; ++gy) rows.push_back(slice(pos_table, 0, gy * cfg.pos_max_w, gw));
    auto pos = concat(rows, 0);  // [S, dim]
    auto tiled = broadcast_to(reshape(pos, {1, S, cfg.dim}), {T, S, cfg.dim});
    return add(x, reshape(tiled, {T * S, cfg.dim}));
}

template <class R>
TensorT<R> StditModelT<R>::condition_embed(const Conditioning& cond, int frames) const {
    if (static_cast<int>(cond.timesteps.size()) != frames)
        throw DimensionError("conditioning: timestep count must equal latent frames");
    for (double t : cond.timesteps)
        if (!(t >= 0.0 && t <= 1.0)) throw DomainError("conditioning: timesteps must be in [0,1]");
    if (!(cond.fps > 0.0)) throw DomainError("conditioning: fps must be positive");
    auto t_basis = sinusoidal_rows<R>(cond.timesteps, cfg.time_basis, 1000.0);
    auto t_emb = linear(silu(linear(t_basis, t_w1, t_b1)), t_w2, t_b2);  // [T, dim]
    auto f_basis = sinusoidal_rows<R>({cond.fps}, cfg.time_basis, 1.0);
    auto f_emb = linear(silu(linear(f_basis, fps_w1, fps_b1)), fps_w2, fps_b2);  // [1, dim]
    return add(t_emb, broadcast_to(f_emb, t_emb.shape()));
}

namespace stdit_detail {

// Per-frame shift/scale modulation of normalized tokens x3 [T,S,D];
// shift/scale rows [T,D].
template <class R>
TensorT<R> modulate(const TensorT<R>& x3, const TensorT<R>& shift, const TensorT<R>& scale) {
    int T = x3.shape()[0], S = x3.shape()[1], d = x3.shape()[2];
    auto sh = broadcast_to(reshape(shift, {T, 1, d}), {T, S, d});
    auto sc = broadcast_to(reshape(scale, {T, 1, d}), {T, S, d});
    return add(mul(x3, add_scalar(sc, 1.0)), sh);
}

template <class R>
TensorT<R> gate(const TensorT<R>& x3, const TensorT<R>& g) {
    int T = x3.shape()[0], S = x3.shape()[1], d = x3.shape()[2];
    return mul(x3, broadcast_to(reshape(g, {T, 1, d}), {T, S, d}));
}

}  // namespace stdit_detail

template <class R>
TensorT<R> StditModelT<R>::block_forward(int block, const TensorT<R>& x3,
                                         const TensorT<R>& cond,
                                         const TensorT<R>& text_kv) const {
    const auto& b = blocks[static_cast<std::size_t>(block)];
    int T = x3.shape()[0], S = x3.shape()[1], d = x3.shape()[2];
    auto mod = linear(silu(cond), b.mod_w, b.mod_b);  // [T, 6d]
    auto sh_msa = slice(mod, 1, 0, d);
    auto sc_msa = slice(mod, 1, d, d);
    auto g_msa = slice(mod, 1, 2 * d, d);
    auto sh_mlp = slice(mod, 1, 3 * d, d);
    auto sc_mlp = slice(mod, 1, 4 * d, d);
    auto g_mlp = slice(mod, 1, 5 * d, d);

    auto ln = [&](const TensorT<R>& t) {
        return reshape(layer_norm(reshape(t, {T * S, d}), unit_gamma, zero_beta, 1e-6),
                       {T, S, d});
    };

    auto x = x3;
    auto sp_in = stdit_detail::modulate(ln(x), sh_msa, sc_msa);
    x = add(x, stdit_detail::gate(spatial_attention(block, sp_in), g_msa));
    x = add(x, temporal_attention(block, ln(x)));
    {
        auto flat = reshape(ln(x), {T * S, d});
        auto attn = attention(b.cross, flat, text_kv, nullptr, nullptr);
        x = add(x, reshape(attn, {T, S, d}));
    }
    auto mlp_in = reshape(stdit_detail::modulate(ln(x), sh_mlp, sc_mlp), {T * S, d});
    auto h = linear(gelu(linear(mlp_in, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
    x = add(x, stdit_detail::gate(reshape(h, {T, S, d}), g_mlp));
    return x;
}

template <class R>
TensorT<R> StditModelT<R>::predict_velocity(const TensorT<R>& latent, const Conditioning& cond,
                                            const TensorT<R>& text_tokens) const {
    if (latent.ndim() != 4) throw DimensionError("predict_velocity: expects [T,h,w,Cz]");
    if (latent.shape()[3] != cfg.latent_channels)
        throw DimensionError("predict_velocity: latent channel mismatch");
    if (text_tokens.ndim() != 2 || text_tokens.shape()[0] < 1)
        throw ValueError("predict_velocity: text must contain at least one token");
    if (text_tokens.shape()[1] != cfg.text_dim)
        throw DimensionError("predict_velocity: text embedding dim mismatch");
    int T = latent.shape()[0], h = latent.shape()[1], w = latent.shape()[2];
    if (h % cfg.patch != 0 || w % cfg.patch != 0)
        throw GeometryError("predict_velocity: latent grid not divisible by patch");
    int gh = h / cfg.patch, gw = w / cfg.patch;
    if (gh > cfg.pos_max_h || gw > cfg.pos_max_w)
        throw GeometryError("predict_velocity: grid exceeds positional table");
    int S = gh * gw;
    int d = cfg.dim;

    auto x = reshape(token_embed(latent, gh, gw), {T, S, d});
    auto cond_emb = condition_embed(cond, T);
    auto text_kv = linear(text_tokens, text_w, text_b);
    for (int bi = 0; bi < cfg.blocks; ++bi) x = block_forward(bi, x, cond_emb, text_kv);

    auto fmod = linear(silu(cond_emb), final_mod_w, final_mod_b);  // [T, 2d]
    auto shift = slice(fmod, 1, 0, d);
    auto scale = slice(fmod, 1, d, d);
    auto xn = reshape(layer_norm(reshape(x, {T * S, d}), unit_gamma, zero_beta, 1e-6), {T, S, d});
    auto xm = reshape(stdit_detail::modulate(xn, shift, scale), {T * S, d});
    auto out = linear(xm, head_w, head_b);  // [T*S, p*p*Cz]
    auto tokens = reshape(out, {T, S, cfg.patch * cfg.patch * cfg.latent_channels});
    return unpatchify(tokens, gh, gw, cfg.patch, cfg.latent_channels);
}

template <class R>
void StditModelT<R>::collect(ParamSet& out) {
    static_assert(std::is_same_v<R, float>, "parameter registry is for the f32 model");
    auto attn = [&out](const std::string& prefix, AttnParamsT<R>& p) {
        out.add(prefix + ".wq", &p.wq);
        out.add(prefix + ".bq", &p.bq);
        out.add(prefix + ".wk", &p.wk);
        out.add(prefix + ".bk", &p.bk);
        out.add(prefix + ".wv", &p.wv);
        out.add(prefix + ".bv", &p.bv);
        out.add(prefix + ".wo", &p.wo);
        out.add(prefix + ".bo", &p.bo);
        out.add(prefix + ".q_scale", &p.q_scale);
        out.add(prefix + ".k_scale", &p.k_scale);
    };
    out.add("stdit.patch.w", &patch_w);
    out.add("stdit.patch.b", &patch_b);
    out.add("stdit.pos_table", &pos_table);
    out.add("stdit.t.w1", &t_w1);
    out.add("stdit.t.b1", &t_b1);
    out.add("stdit.t.w2", &t_w2);
    out.add("stdit.t.b2", &t_b2);
    out.add("stdit.fps.w1", &fps_w1);
    out.add("stdit.fps.b1", &fps_b1);
    out.add("stdit.fps.w2", &fps_w2);
    out.add("stdit.fps.b2", &fps_b2);
    out.add("stdit.text.w", &text_w);
    out.add("stdit.text.b", &text_b);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        std::string p = "stdit.blocks." + std::to_string(i);
        attn(p + ".spatial", blocks[i].spatial);
        attn(p + ".temporal", blocks[i].temporal);
        attn(p + ".cross", blocks[i].cross);
        out.add(p + ".mlp.w1", &blocks[i].mlp_w1);
        out.add(p + ".mlp.b1", &blocks[i].mlp_b1);
        out.add(p + ".mlp.w2", &blocks[i].mlp_w2);
        out.add(p + ".mlp.b2", &blocks[i].mlp_b2);
        out.add(p + ".mod.w", &blocks[i].mod_w);
        out.add(p + ".mod.b", &blocks[i].mod_b);
    }
    out.add("stdit.final_mod.w", &final_mod_w);
    out.add("stdit.final_mod.b", &final_mod_b);
    out.add("stdit.head.w", &head_w);
    out.add("stdit.head.b", &head_b);
}

template <class R>
std::size_t StditModelT<R>::parameter_count() const {
    std::size_t n = 0;
    auto add_attn = [&n](const AttnParamsT<R>& p) {
        n += p.wq.numel() + p.bq.numel() + p.wk.numel() + p.bk.numel() + p.wv.numel() +
             p.bv.numel() + p.wo.numel() + p.bo.numel() + p.q_scale.numel() + p.k_scale.numel();
    };
    n += patch_w.numel() + patch_b.numel() + pos_table.numel();
    n += t_w1.numel() + t_b1.numel() + t_w2.numel() + t_b2.numel();
    n += fps_w1.numel() + fps_b1.numel() + fps_w2.numel() + fps_b2.numel();
    n += text_w.numel() + text_b.numel();
    for (const auto& b : blocks) {
        add_attn(b.spatial);
        add_attn(b.temporal);
        add_attn(b.cross);
        n += b.mlp_w1.numel() + b.mlp_b1.numel() + b.mlp_w2.numel() + b.mlp_b2.numel();
        n += b.mod_w.numel() + b.mod_b.numel();
    }
    n += final_mod_w.numel() + final_mod_b.numel() + head_w.numel() + head_b.numel();
    return n;
}

inline StditModelT<double> cast_model_f64(const StditModel& m) {
    StditModelT<double> d;
    d.cfg = m.cfg;
    auto cv = [](const Tensor& t) { return t.cast<double>(); };
    d.patch_w = cv(m.patch_w);
    d.patch_b = cv(m.patch_b);
    d.pos_table = cv(m.pos_table);
    d.t_w1 = cv(m.t_w1);
    d.t_b1 = cv(m.t_b1);
    d.t_w2 = cv(m.t_w2);
    d.t_b2 = cv(m.t_b2);
    d.fps_w1 = cv(m.fps_w1);
    d.fps_b1 = cv(m.fps_b1);
    d.fps_w2 = cv(m.fps_w2);
    d.fps_b2 = cv(m.fps_b2);
    d.text_w = cv(m.text_w);
    d.text_b = cv(m.text_b);
    auto cattn = [&cv](const AttnParamsT<float>& p) {
        AttnParamsT<double> o;
        o.wq = cv(p.wq);
        o.bq = cv(p.bq);
        o.wk = cv(p.wk);
        o.bk = cv(p.bk);
        o.wv = cv(p.wv);
        o.bv = cv(p.bv);
        o.wo = cv(p.wo);
        o.bo = cv(p.bo);
        o.q_scale = cv(p.q_scale);
        o.k_scale = cv(p.k_scale);
        return o;
    };
    for (const auto& b : m.blocks) {
        StditBlockT<double> ob;
        ob.spatial = cattn(b.spatial);
        ob.temporal = cattn(b.temporal);
        ob.cross = cattn(b.cross);
        ob.mlp_w1 = cv(b.mlp_w1);
        ob.mlp_b1 = cv(b.mlp_b1);
        ob.mlp_w2 = cv(b.mlp_w2);
        ob.mlp_b2 = cv(b.mlp_b2);
        ob.mod_w = cv(b.mod_w);
        ob.mod_b = cv(b.mod_b);
        d.blocks.push_back(std::move(ob));
    }
    d.final_mod_w = cv(m.final_mod_w);
    d.final_mod_b = cv(m.final_mod_b);
    d.head_w = cv(m.head_w);
    d.head_b = cv(m.head_b);
    d.unit_gamma = cv(m.unit_gamma);
    d.zero_beta = cv(m.zero_beta);
    return d;
}

}  // namespace sora
