#include "sora/bucketizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace sora {

namespace {

int snap16(double v) {
    int snapped = static_cast<int>(std::lround(v / 16.0)) * 16;
    return std::max(snapped, 16);
}

}  // namespace

int Bucket::pixel_height() const {
    return aspect_w >= aspect_h ? std::max(snap16(resolution), 16)
                                : snap16(static_cast<double>(resolution) * aspect_h / aspect_w);
}

int Bucket::pixel_width() const {
    return aspect_w >= aspect_h ? snap16(static_cast<double>(resolution) * aspect_w / aspect_h)
                                : std::max(snap16(resolution), 16);
}

std::optional<std::size_t> assign(const SampleMeta& s, const std::vector<Bucket>& buckets,
                                  Rng& rng) {
    if (buckets.empty()) throw ValueError("assign: bucket list is empty");
    s.validate();

    struct Candidate {
        std::size_t index;
        int resolution;
        int frames;
        double aspect_dist;
    };
    std::vector<Candidate> fits;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const Bucket& b = buckets[i];
        b.validate();
        if (b.resolution <= s.short_side() && b.frames <= s.frames)
            fits.push_back({i, b.resolution, b.frames,
                            std::abs(std::log(s.aspect() / b.aspect()))});
    }
    if (fits.empty()) return std::nullopt;

    // largest bucket first: lexicographic (resolution, frames), nearest
    // aspect within a level, table order as the final tie-break
    std::sort(fits.begin(), fits.end(), [](const Candidate& a, const Candidate& b) {
        if (a.resolution != b.resolution) return a.resolution > b.resolution;
        if (a.frames != b.frames) return a.frames > b.frames;
        if (a.aspect_dist != b.aspect_dist) return a.aspect_dist < b.aspect_dist;
        return a.index < b.index;
    });

    // keep_prob cascade: a refusal retries strictly smaller (res, frames) levels
    std::size_t i = 0;
    while (i < fits.size()) {
        const Candidate& head = fits[i];
        if (rng.bernoulli(buckets[head.index].keep_prob)) return head.index;
        std::size_t j = i;
        while (j < fits.size() && fits[j].resolution == head.resolution &&
               fits[j].frames == head.frames)
            ++j;
        i = j;
    }
    return std::nullopt;
}

EpochPlan plan_epoch(const std::vector<SampleMeta>& samples, const std::vector<Bucket>& buckets,
                     Rng& rng) {
    EpochPlan plan;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::map<std::size_t, std::vector<std::string>> per_bucket;
    for (std::size_t oi : order) {
        auto b = assign(samples[oi], buckets, rng);
        if (!b) {
            ++plan.rejected;
            continue;
        }
        per_bucket[*b].push_back(samples[oi].clip_id);
    }

    for (auto& [bi, ids] : per_bucket) {
        std::size_t bs = static_cast<std::size_t>(buckets[bi].batch_size);
        std::size_t full = ids.size() / bs;
        for (std::size_t k = 0; k < full; ++k) {
            Batch batch;
            batch.bucket_index = bi;
            batch.clip_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(k * bs),
                                  ids.begin() + static_cast<std::ptrdiff_t>((k + 1) * bs));
            plan.batches.push_back(std::move(batch));
        }
        plan.dropped_partial += static_cast<int>(ids.size() - full * bs);
    }
    rng.shuffle(plan.batches);
    return plan;
}

LoadReport load_report(const EpochPlan& plan, const std::vector<Bucket>& buckets) {
    if (plan.batches.empty()) throw ValueError("load_report: empty plan");
    LoadReport rep;
    std::map<std::size_t, std::pair<int, int>> counts;  // bucket -> (batches, samples)
    for (const auto& b : plan.batches) {
        counts[b.bucket_index].first += 1;
        counts[b.bucket_index].second += static_cast<int>(b.clip_ids.size());
    }
    double mx = 0.0, mn = 0.0, sum = 0.0;
    int nbatches = 0;
    bool first = true;
    for (const auto& [bi, cs] : counts) {
        const Bucket& bucket = buckets[bi];
        double proxy = bucket.token_proxy();
        rep.rows.push_back({bi, bucket.label, bucket.frames, cs.first, cs.second, proxy});
        if (first) {
            mx = mn = proxy;
            first = false;
        }
        mx = std::max(mx, proxy);
        mn = std::min(mn, proxy);
        sum += proxy * cs.first;
        nbatches += cs.first;
    }
    rep.max_tokens = mx;
    rep.min_tokens = mn;
    rep.mean_tokens = sum / nbatches;
    return rep;
}

std::string LoadReport::to_csv(const std::vector<Bucket>& buckets) const {
    std::ostringstream os;
    os << "bucket,resolution,frames,aspect,batch_size,batches,samples,tokens_per_batch\n";
    for (const auto& r : rows) {
        const Bucket& b = buckets[r.bucket_index];
        os << r.label << "," << b.resolution << "," << r.frames << "," << b.aspect_str() << ","
           << b.batch_size << "," << r.batches << "," << r.samples << "," << r.tokens_per_batch
           << "\n";
    }
    os << "summary,max=" << max_tokens << ",min=" << min_tokens << ",mean=" << mean_tokens
       << ",,,,\n";
    return os.str();
}

}  // namespace sora
