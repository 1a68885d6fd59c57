#include "sora/conditioning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "sora/ops.hpp"

namespace sora {

const char* mask_pattern_name(MaskPattern p) {
    switch (p) {
        case MaskPattern::NoMask: return "none";
        case MaskPattern::First1: return "first1";
        case MaskPattern::FirstK: return "firstk";
        case MaskPattern::Last1: return "last1";
        case MaskPattern::LastK: return "lastk";
        case MaskPattern::FirstLastK: return "firstlastk";
        case MaskPattern::Random: return "random";
    }
    return "?";
}

SampledMask sample_pattern(Rng& rng, int frames, double mask_prob) {
    if (mask_prob < 0.0 || mask_prob > 1.0)
        throw DomainError("sample_pattern: mask_prob must be in [0,1]");
    if (frames < 1) throw DomainError("sample_pattern: need at least one frame");

    SampledMask out;
    out.mask.unmasked.assign(static_cast<std::size_t>(frames), 0);
    if (mask_prob > 0.0 && frames < 2)
        throw DomainError("sample_pattern: masking requires at least two frames");
    if (!(rng.uniform() < mask_prob)) {
        out.pattern = MaskPattern::NoMask;
        return out;
    }

    static const MaskPattern kPatterns[6] = {MaskPattern::First1, MaskPattern::FirstK,
                                             MaskPattern::Last1,  MaskPattern::LastK,
                                             MaskPattern::FirstLastK, MaskPattern::Random};
    out.pattern = kPatterns[rng.uniform_int(6)];
    int kmax = (frames + 3) / 4;  // ceil(T/4) < T for T >= 2
    int k = 1 + rng.uniform_int(kmax);
    auto& m = out.mask.unmasked;
    switch (out.pattern) {
        case MaskPattern::First1: m[0] = 1; break;
        case MaskPattern::FirstK:
            for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i)] = 1;
            break;
        case MaskPattern::Last1: m[static_cast<std::size_t>(frames - 1)] = 1; break;
        case MaskPattern::LastK:
            for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(frames - 1 - i)] = 1;
            break;
        case MaskPattern::FirstLastK:
            for (int i = 0; i < k; ++i) {
                m[static_cast<std::size_t>(i)] = 1;
                m[static_cast<std::size_t>(frames - 1 - i)] = 1;
            }
            break;
        case MaskPattern::Random: {
            int r = 1 + rng.uniform_int(frames - 1);  // 1..T-1 unmasked
            std::vector<int> idx(static_cast<std::size_t>(frames));
            for (int i = 0; i < frames; ++i) idx[static_cast<std::size_t>(i)] = i;
            rng.shuffle(idx);
            for (int i = 0; i < r; ++i) m[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
            break;
        }
        case MaskPattern::NoMask: break;
    }
    // a training sample must keep at least one diffused frame
    if (out.mask.masked_count() == 0) m[static_cast<std::size_t>(frames - 1)] = 0;
    return out;
}

std::vector<double> assign_timesteps(const FrameMask& mask, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("assign_timesteps: t must be in [0,1]");
    std::vector<double> out(static_cast<std::size_t>(mask.frames()));
    for (int f = 0; f < mask.frames(); ++f)
        out[static_cast<std::size_t>(f)] = mask.is_conditioning(f) ? 0.0 : t;
    return out;
}

const std::vector<std::string>& camera_motion_vocabulary() {
    static const std::vector<std::string> vocab = {
        "static", "pan left", "pan right", "tilt up", "tilt down", "zoom in", "zoom out"};
    return vocab;
}

std::string render_score(double v) {
    if (!std::isfinite(v)) throw ValueError("render_score: score must be finite");
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_caption(const ScoredCaption& c) {
    if (c.camera) {
        const auto& vocab = camera_motion_vocabulary();
        if (std::find(vocab.begin(), vocab.end(), *c.camera) == vocab.end())
            throw ValueError("format_caption: unknown camera motion label '" + *c.camera + "'");
    }
    std::string out = c.caption;
    out += " aesthetic score: ";
    out += render_score(c.aesthetic);
    out += ", motion score: ";
    out += render_score(c.motion);
    if (c.camera) {
        out += ", camera motion: ";
        out += *c.camera;
    }
    return out;
}

namespace {

bool parse_double(std::string_view s, double& out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace

std::optional<ScoredCaption> parse_caption(const std::string& s) {
    const std::string aes_marker = " aesthetic score: ";
    const std::string mot_marker = ", motion score: ";
    const std::string cam_marker = ", camera motion: ";
    auto aes_pos = s.rfind(aes_marker);
    if (aes_pos == std::string::npos) return std::nullopt;
    auto mot_pos = s.find(mot_marker, aes_pos);
    if (mot_pos == std::string::npos) return std::nullopt;

    ScoredCaption c;
    c.caption = s.substr(0, aes_pos);
    std::string aes_str = s.substr(aes_pos + aes_marker.size(),
                                   mot_pos - aes_pos - aes_marker.size());
    auto cam_pos = s.find(cam_marker, mot_pos);
    std::string mot_str, cam_str;
    if (cam_pos == std::string::npos) {
        mot_str = s.substr(mot_pos + mot_marker.size());
    } else {
        mot_str = s.substr(mot_pos + mot_marker.size(), cam_pos - mot_pos - mot_marker.size());
        cam_str = s.substr(cam_pos + cam_marker.size());
        c.camera = cam_str;
    }
    if (!parse_double(aes_str, c.aesthetic) || !parse_double(mot_str, c.motion))
        return std::nullopt;
    return c;
}

TextEmbedding embed_text(const std::string& text, int max_tokens, int dim) {
    if (max_tokens < 1) throw ValueError("embed_text: max_tokens must be >= 1");
    if (dim < 1) throw ValueError("embed_text: dim must be >= 1");

    std::vector<std::string> words;
    std::istringstream is(text);
    std::string w;
    while (is >> w) words.push_back(w);

    TextEmbedding emb;
    emb.length = std::min<int>(static_cast<int>(words.size()), max_tokens);
    std::vector<float> data(static_cast<std::size_t>(max_tokens) * dim, 0.0f);
    double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int i = 0; i < emb.length; ++i) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : words[static_cast<std::size_t>(i)]) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        Rng row(h);
        for (int d = 0; d < dim; ++d)
            data[static_cast<std::size_t>(i) * dim + d] =
                static_cast<float>(row.normal() * scale);
    }
    emb.tokens = Tensor::from_data({max_tokens, dim}, std::move(data));
    return emb;
}

Tensor TextEmbedding::active() const {
    if (length < 1) throw ValueError("text embedding has no tokens");
    return slice(tokens, 0, 0, length);
}

}  // namespace sora
