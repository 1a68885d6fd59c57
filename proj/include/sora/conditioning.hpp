#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sora/tensor.hpp"

namespace sora {

// true = unmasked, i.e. the frame is held clean as conditioning.
struct FrameMask {
    std::vector<char> unmasked;

    int frames() const { return static_cast<int>(unmasked.size()); }
    bool is_conditioning(int f) const { return unmasked[static_cast<std::size_t>(f)] != 0; }
    bool any_unmasked() const {
        for (char c : unmasked)
            if (c) return true;
        return false;
    }
    int masked_count() const {
        int n = 0;
        for (char c : unmasked) n += c ? 0 : 1;
        return n;
    }
};

enum class MaskPattern { NoMask, First1, FirstK, Last1, LastK, FirstLastK, Random };

const char* mask_pattern_name(MaskPattern p);

struct SampledMask {
    MaskPattern pattern = MaskPattern::NoMask;
    FrameMask mask;
};

// With probability (1 - mask_prob) no conditioning is applied; otherwise one
// of the six unmask patterns is chosen uniformly, k uniform in 1..ceil(T/4).
// At least one frame always stays masked.
SampledMask sample_pattern(Rng& rng, int frames, double mask_prob);

// Unmasked (conditioning) frames get timestep 0, masked frames keep t.
std::vector<double> assign_timesteps(const FrameMask& mask, double t);

// -------------------------------------------------------------- captions

const std::vector<std::string>& camera_motion_vocabulary();

struct ScoredCaption {
    std::string caption;
    double aesthetic = 0.0;
    double motion = 0.0;
    std::optional<std::string> camera;  // from camera_motion_vocabulary()
};

// "<caption> aesthetic score: <a>, motion score: <m>[, camera motion: <label>]"
// Scores render with minimal decimals (5.5 -> "5.5", 10.0 -> "10").
std::string format_caption(const ScoredCaption& c);

// Inverse of format_caption; nullopt if the markers are absent.
std::optional<ScoredCaption> parse_caption(const std::string& s);

// minimal-decimal rendering used by format_caption
std::string render_score(double v);

// ---------------------------------------------------------- text embedding

// Deterministic hash-based stand-in for a text encoder: same string, same
// embedding, bit for bit.
struct TextEmbedding {
    Tensor tokens;  // [max_tokens, dim]; rows past `length` are zero padding
    int length = 0;

    // Rows actually carrying tokens; the model consumes this view.
    Tensor active() const;
};

TextEmbedding embed_text(const std::string& text, int max_tokens, int dim);

}  // namespace sora
