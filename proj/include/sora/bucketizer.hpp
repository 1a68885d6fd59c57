#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sora/rng.hpp"
#include "sora/tensor.hpp"

namespace sora {

// Scheduling unit: fixed (resolution, frame count, aspect ratio) plus the
// keep-probability / batch-size compute knobs. Pixel dims are snapped to
// multiples of 16 so the 8x spatial codec and patch-2 transformer always
// see integer grids.
struct Bucket {
    std::string label;      // e.g. "240p"
    int resolution = 0;     // short-side pixels
    int frames = 0;
    int aspect_w = 1;
    int aspect_h = 1;
    double keep_prob = 1.0;
    int batch_size = 1;

    int pixel_height() const;
    int pixel_width() const;
    double aspect() const { return static_cast<double>(aspect_w) / aspect_h; }
    std::string aspect_str() const {
        return std::to_string(aspect_w) + ":" + std::to_string(aspect_h);
    }

    void validate() const {
        if (resolution < 8 || frames < 1) throw ValueError("bucket: bad geometry");
        if (aspect_w < 1 || aspect_h < 1) throw ValueError("bucket: bad aspect");
        if (keep_prob < 0.0 || keep_prob > 1.0) throw ValueError("bucket: keep_prob in [0,1]");
        if (batch_size < 1) throw ValueError("bucket: batch_size >= 1");
    }

    // Compute proxy per batch: frames x latent tokens x batch size.
    double token_proxy() const {
        return static_cast<double>(frames) * (pixel_height() / 8.0) * (pixel_width() / 8.0) *
               batch_size;
    }
};

struct SampleMeta {
    std::string clip_id;
    int width = 0;
    int height = 0;
    int frames = 0;
    double fps = 4.0;

    int short_side() const { return std::min(width, height); }
    double aspect() const { return static_cast<double>(width) / height; }

    void validate() const {
        if (width < 1 || height < 1 || frames < 1) throw ValueError("sample: bad geometry");
    }
};

// Bucket index, or nullopt when every fitting bucket declined the sample.
std::optional<std::size_t> assign(const SampleMeta& s, const std::vector<Bucket>& buckets,
                                  Rng& rng);

struct Batch {
    std::size_t bucket_index = 0;
    std::vector<std::string> clip_ids;
};

struct EpochPlan {
    std::vector<Batch> batches;
    int rejected = 0;         // samples no bucket accepted
    int dropped_partial = 0;  // samples lost to partial-batch dropping
};

// Shuffle, assign, group into homogeneous batches, drop partial batches,
// interleave in shuffled order. Deterministic in (samples, buckets, seed).
EpochPlan plan_epoch(const std::vector<SampleMeta>& samples, const std::vector<Bucket>& buckets,
                     Rng& rng);

struct LoadReport {
    struct Row {
        std::size_t bucket_index;
        std::string label;
        int frames;
        int batches;
        int samples;
        double tokens_per_batch;
    };
    std::vector<Row> rows;
    double max_tokens = 0.0;
    double min_tokens = 0.0;
    double mean_tokens = 0.0;

    std::string to_csv(const std::vector<Bucket>& buckets) const;
};

LoadReport load_report(const EpochPlan& plan, const std::vector<Bucket>& buckets);

}  // namespace sora
