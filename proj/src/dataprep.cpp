#include "sora/dataprep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "sora/conditioning.hpp"
#include "sora/csv.hpp"
#include "sora/vten.hpp"

namespace sora {

double FlowField::mean_magnitude() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        acc += std::sqrt(static_cast<double>(u[i]) * u[i] + static_cast<double>(v[i]) * v[i]);
    return u.empty() ? 0.0 : acc / static_cast<double>(u.size());
}

std::vector<int> detect_scenes(const VideoTensor& v, double threshold) {
    if (v.frames < 2) throw GeometryError("detect_scenes: need at least two frames");
    const int diffs = v.frames - 1;
    std::vector<double> d(static_cast<std::size_t>(diffs));
    std::vector<float> prev = luma_frame(v, 0);
    for (int t = 1; t < v.frames; ++t) {
        std::vector<float> cur = luma_frame(v, t);
        double acc = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i)
            acc += std::abs(static_cast<double>(cur[i]) - prev[i]);
        d[static_cast<std::size_t>(t - 1)] = acc / static_cast<double>(cur.size());
        prev = std::move(cur);
    }

    // rolling median over a centered window of 9 diffs, floored so that an
    // infinite threshold never fires
    const int radius = 4;
    const double floor_level = 1e-6;
    std::vector<int> cuts;
    for (int i = 0; i < diffs; ++i) {
        int lo = std::max(0, i - radius);
        int hi = std::min(diffs - 1, i + radius);
        std::vector<double> window(d.begin() + lo, d.begin() + hi + 1);
        std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
        double med = std::max(window[window.size() / 2], floor_level);
        if (d[static_cast<std::size_t>(i)] > threshold * med) cuts.push_back(i + 1);
    }
    return cuts;
}

double reference_aesthetic_scorer(const VideoTensor& frame) {
    auto luma = luma_frame(frame, 0);
    double mean = 0.0;
    for (float p : luma) mean += p;
    mean /= static_cast<double>(luma.size());
    double var = 0.0;
    for (float p : luma) {
        double dv = p - mean;
        var += dv * dv;
    }
    var /= static_cast<double>(luma.size());
    double contrast = std::sqrt(var);

    double grad = 0.0;
    std::size_t count = 0;
    int w = frame.width, h = frame.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
            grad += std::abs(static_cast<double>(luma[static_cast<std::size_t>(y) * w + x + 1]) -
                             luma[static_cast<std::size_t>(y) * w + x]);
            ++count;
        }
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) {
            grad += std::abs(static_cast<double>(luma[static_cast<std::size_t>(y + 1) * w + x]) -
                             luma[static_cast<std::size_t>(y) * w + x]);
            ++count;
        }
    double sharpness = count ? grad / static_cast<double>(count) : 0.0;
    return std::clamp(10.0 * (2.0 * contrast + 6.0 * sharpness), 0.0, 10.0);
}

double aesthetic_score(const VideoTensor& v, const FrameScorer& scorer) {
    if (!scorer) throw ValueError("aesthetic_score: scorer required");
    int idx[3] = {0, v.frames / 2, v.frames - 1};
    double acc = 0.0;
    for (int i : idx) acc += scorer(v.frame(i));
    return acc / 3.0;
}

namespace {

constexpr int kBlock = 8;
constexpr int kSearch = 4;

FlowField block_match(const std::vector<float>& a, const std::vector<float>& b, int h, int w) {
    // blocks are inset by the search radius so every candidate displacement
    // stays inside the frame
    int margin_y = h >= kBlock + 2 * kSearch ? kSearch : 0;
    int margin_x = w >= kBlock + 2 * kSearch ? kSearch : 0;
    FlowField f;
    f.grid_h = (h - 2 * margin_y) / kBlock;
    f.grid_w = (w - 2 * margin_x) / kBlock;
    f.u.assign(static_cast<std::size_t>(f.grid_h) * f.grid_w, 0.0f);
    f.v.assign(static_cast<std::size_t>(f.grid_h) * f.grid_w, 0.0f);

    // displacements ordered by magnitude so ties resolve to the smallest move
    std::vector<std::pair<int, int>> moves;
    for (int dy = -kSearch; dy <= kSearch; ++dy)
        for (int dx = -kSearch; dx <= kSearch; ++dx) moves.emplace_back(dy, dx);
    std::sort(moves.begin(), moves.end(), [](auto& l, auto& r) {
        int ml = l.first * l.first + l.second * l.second;
        int mr = r.first * r.first + r.second * r.second;
        if (ml != mr) return ml < mr;
        return l < r;
    });

    for (int by = 0; by < f.grid_h; ++by)
        for (int bx = 0; bx < f.grid_w; ++bx) {
            int y0 = margin_y + by * kBlock, x0 = margin_x + bx * kBlock;
            double best = 1e300;
            int bu = 0, bv = 0;
            for (auto [dy, dx] : moves) {
                if (y0 + dy < 0 || x0 + dx < 0 || y0 + dy + kBlock > h || x0 + dx + kBlock > w)
                    continue;
                double sad = 0.0;
                for (int yy = 0; yy < kBlock; ++yy)
                    for (int xx = 0; xx < kBlock; ++xx)
                        sad += std::abs(
                            static_cast<double>(a[static_cast<std::size_t>(y0 + yy) * w + x0 + xx]) -
                            b[static_cast<std::size_t>(y0 + dy + yy) * w + x0 + dx + xx]);
                if (sad < best) {
                    best = sad;
                    bv = dy;
                    bu = dx;
                }
            }
            f.at_u(by, bx) = static_cast<float>(bu);
            f.at_v(by, bx) = static_cast<float>(bv);
        }
    return f;
}

}  // namespace

std::vector<FlowField> optical_flow(const VideoTensor& v) {
    if (v.frames < 2) throw GeometryError("optical_flow: need at least two frames");
    if (v.height < kBlock || v.width < kBlock)
        throw GeometryError("optical_flow: frame smaller than one block");
    std::vector<FlowField> fields;
    std::vector<float> prev = luma_frame(v, 0);
    for (int t = 1; t < v.frames; ++t) {
        std::vector<float> cur = luma_frame(v, t);
        fields.push_back(block_match(prev, cur, v.height, v.width));
        prev = std::move(cur);
    }
    return fields;
}

double flow_score(const VideoTensor& v) {
    auto fields = optical_flow(v);
    double acc = 0.0;
    for (const auto& f : fields) acc += f.mean_magnitude();
    return acc / static_cast<double>(fields.size());
}

double reference_text_detector(const VideoTensor& frame) {
    auto luma = luma_frame(frame, 0);
    int h = frame.height, w = frame.width;
    int gh = h / kBlock, gw = w / kBlock;
    if (gh == 0 || gw == 0) return 0.0;
    int flagged = 0;
    for (int by = 0; by < gh; ++by)
        for (int bx = 0; bx < gw; ++bx) {
            int edges = 0, total = 0;
            float lo = 1.0f, hi = 0.0f;
            for (int y = by * kBlock; y < (by + 1) * kBlock; ++y)
                for (int x = bx * kBlock; x + 1 < (bx + 1) * kBlock; ++x) {
                    float a = luma[static_cast<std::size_t>(y) * w + x];
                    float b = luma[static_cast<std::size_t>(y) * w + x + 1];
                    lo = std::min(lo, a);
                    hi = std::max(hi, a);
                    if (std::abs(a - b) > 0.25f) ++edges;
                    ++total;
                }
            double density = total ? static_cast<double>(edges) / total : 0.0;
            if (density >= 0.25 && (hi - lo) >= 0.4f) ++flagged;
        }
    return static_cast<double>(flagged) / (static_cast<double>(gh) * gw);
}

double ocr_area_ratio(const VideoTensor& v, const TextAreaDetector& detector) {
    if (!detector) throw ValueError("ocr_area_ratio: detector required");
    int idx[3] = {0, v.frames / 2, v.frames - 1};
    double acc = 0.0;
    for (int i : idx) acc += detector(v.frame(i));
    return acc / 3.0;
}

std::string camera_motion(const std::vector<FlowField>& flows, const CameraThresholds& th) {
    if (flows.empty()) throw ValueError("camera_motion: need at least one flow field");
    if (!(th.translation > 0.0) || !(th.divergence > 0.0))
        throw ValueError("camera_motion: thresholds must be positive");

    double mu = 0.0, mv = 0.0, div = 0.0;
    std::size_t nblocks = 0, ndiv = 0;
    for (const auto& f : flows) {
        for (std::size_t i = 0; i < f.u.size(); ++i) {
            mu += f.u[i];
            mv += f.v[i];
        }
        nblocks += f.u.size();
        for (int y = 1; y + 1 < f.grid_h; ++y)
            for (int x = 1; x + 1 < f.grid_w; ++x) {
                double dudx = (f.at_u(y, x + 1) - f.at_u(y, x - 1)) / (2.0 * kBlock);
                double dvdy = (f.at_v(y + 1, x) - f.at_v(y - 1, x)) / (2.0 * kBlock);
                div += dudx + dvdy;
                ++ndiv;
            }
    }
    mu /= static_cast<double>(nblocks);
    mv /= static_cast<double>(nblocks);
    if (ndiv) div /= static_cast<double>(ndiv);

    double rt = std::max(std::abs(mu), std::abs(mv)) / th.translation;
    double rd = std::abs(div) / th.divergence;
    if (rt < 1.0 && rd < 1.0) return "static";
    if (rd >= rt) return div > 0.0 ? "zoom in" : "zoom out";
    // camera direction is opposite the content motion
    if (std::abs(mu) >= std::abs(mv)) return mu > 0.0 ? "pan left" : "pan right";
    return mv > 0.0 ? "tilt up" : "tilt down";
}

// ----------------------------------------------------------------- pipeline

namespace {

double round1v(double v) { return std::round(v * 10.0) / 10.0; }

struct ClipTask {
    std::size_t input_index;
    int scene_index;
    int frame_start;
    int frame_count;
};

}  // namespace

PrepResult run_pipeline(const std::vector<PrepInput>& videos, const PrepConfig& cfg) {
    PrepResult result;
    FrameScorer scorer = cfg.aesthetic_scorer ? cfg.aesthetic_scorer : reference_aesthetic_scorer;
    TextAreaDetector detector = cfg.text_detector ? cfg.text_detector : reference_text_detector;
    if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

    // Load + scene-cut serially (IO bound, errors recorded per item), then
    // score clips on a worker pool.
    std::vector<VideoTensor> loaded(videos.size());
    std::vector<bool> ok(videos.size(), false);
    std::vector<ClipTask> tasks;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        try {
            loaded[i] = load_video_any(videos[i].path);
            ok[i] = true;
        } catch (const Error& e) {
            result.errors.push_back(videos[i].source_id + ": " + e.what());
            continue;
        }
        const VideoTensor& v = loaded[i];
        std::vector<int> cuts = v.frames >= 2 ? detect_scenes(v, cfg.scene_threshold)
                                              : std::vector<int>{};
        std::vector<int> bounds{0};
        for (int c : cuts) bounds.push_back(c);
        bounds.push_back(v.frames);
        int scene = 0;
        for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
            int start = bounds[k];
            int len = bounds[k + 1] - start;
            // long scenes are chunked; stubs below min length are skipped
            while (len > 0) {
                int take = std::min(len, cfg.max_clip_frames);
                if (take >= cfg.min_clip_frames)
                    tasks.push_back({i, scene++, start, take});
                start += take;
                len -= take;
            }
        }
    }

    std::vector<ClipRecord> records(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            const ClipTask& task = tasks[t];
            const PrepInput& input = videos[task.input_index];
            VideoTensor clip = loaded[task.input_index].frame_range(task.frame_start,
                                                                    task.frame_count);
            ClipRecord rec;
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "_%03d", task.scene_index);
            rec.clip_id = input.source_id + suffix;
            rec.source_id = input.source_id;
            rec.frame_start = task.frame_start;
            rec.frames = clip.frames;
            rec.width = clip.width;
            rec.height = clip.height;
            rec.fps = input.fps;
            rec.aesthetic = aesthetic_score(clip, scorer);
            rec.flow = clip.frames >= 2 ? flow_score(clip) : 0.0;
            rec.ocr_ratio = ocr_area_ratio(clip, detector);
            rec.camera = clip.frames >= 2 ? camera_motion(optical_flow(clip), cfg.camera)
                                          : "static";
            rec.keep = rec.aesthetic >= cfg.aes_min && rec.flow >= cfg.flow_min &&
                       rec.ocr_ratio <= cfg.ocr_max;

            ScoredCaption sc;
            sc.caption = input.caption;
            sc.aesthetic = round1v(rec.aesthetic);
            sc.motion = round1v(rec.flow);
            if (rec.camera != "static") sc.camera = rec.camera;
            rec.caption = format_caption(sc);

            if (rec.keep && !cfg.output_dir.empty()) {
                auto path = cfg.output_dir / (rec.clip_id + ".vten");
                {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    vten_save_video(path, clip);
                }
                rec.path = path.string();
            }
            records[t] = std::move(rec);
        }
    };
    int nworkers = std::max(1, cfg.workers);
    std::vector<std::thread> pool;
    for (int i = 1; i < nworkers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::sort(records.begin(), records.end(),
              [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
    result.records = std::move(records);
    std::sort(result.errors.begin(), result.errors.end());
    return result;
}

std::string manifest_csv(const std::vector<ClipRecord>& records) {
    std::string out = "clip_id,path,width,height,frames,fps,caption,aes,flow,ocr_ratio,"
                      "camera_motion,keep\n";
    for (const auto& r : records) {
        out += csv_row({r.clip_id, r.path, std::to_string(r.width), std::to_string(r.height),
                        std::to_string(r.frames), render_score(r.fps), r.caption,
                        render_score(round1v(r.aesthetic)), render_score(round1v(r.flow)),
                        render_score(std::round(r.ocr_ratio * 1000.0) / 1000.0), r.camera,
                        r.keep ? "1" : "0"});
    }
    return out;
}

std::vector<ClipRecord> parse_manifest_csv(const std::string& text) {
    std::vector<ClipRecord> out;
    std::istringstream is(text);
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto f = csv_parse_row(line);
        if (f.size() != 12) throw IoError("manifest row with " + std::to_string(f.size()) +
                                          " fields");
        ClipRecord r;
        r.clip_id = f[0];
        r.path = f[1];
        r.width = std::stoi(f[2]);
        r.height = std::stoi(f[3]);
        r.frames = std::stoi(f[4]);
        r.fps = std::stod(f[5]);
        r.caption = f[6];
        r.aesthetic = std::stod(f[7]);
        r.flow = std::stod(f[8]);
        r.ocr_ratio = std::stod(f[9]);
        r.camera = f[10];
        r.keep = f[11] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

void histogram(std::string& out, const std::string& metric, const std::vector<double>& values,
               double lo, double hi, int bins) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        counts[static_cast<std::size_t>(b)]++;
    }
    for (int b = 0; b < bins; ++b) {
        double bl = lo + (hi - lo) * b / bins;
        double bh = lo + (hi - lo) * (b + 1) / bins;
        out += csv_row({metric, render_score(bl), render_score(bh),
                        std::to_string(counts[static_cast<std::size_t>(b)])});
    }
}

}  // namespace

std::string stats_csv(const std::vector<ClipRecord>& records) {
    std::string out = "metric,bin_lo,bin_hi,count\n";
    if (records.empty()) return out;
    std::vector<double> dur, res, aes, flow, ocr;
    for (const auto& r : records) {
        dur.push_back(static_cast<double>(r.frames) / std::max(r.fps, 1e-9));
        res.push_back(std::min(r.width, r.height));
        aes.push_back(r.aesthetic);
        flow.push_back(r.flow);
        ocr.push_back(r.ocr_ratio);
    }
    double max_dur = *std::max_element(dur.begin(), dur.end());
    double max_res = *std::max_element(res.begin(), res.end());
    double max_flow = *std::max_element(flow.begin(), flow.end());
    histogram(out, "duration_s", dur, 0.0, std::max(max_dur, 1e-9), 8);
    histogram(out, "short_side_px", res, 0.0, std::max(max_res, 1.0), 8);
    histogram(out, "aesthetic", aes, 0.0, 10.0, 10);
    histogram(out, "flow", flow, 0.0, std::max(max_flow, 1e-9), 8);
    histogram(out, "ocr_ratio", ocr, 0.0, 1.0, 10);
    return out;
}

}  // namespace sora
