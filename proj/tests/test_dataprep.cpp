#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sora/dataprep.hpp"
#include "sora/csv.hpp"
#include "sora/vten.hpp"

using namespace sora;

namespace {

// Smooth seeded texture: coarse noise grid, bilinearly interpolated, so
// block matching has structure to lock onto.
struct Texture {
    int coarse = 16;
    std::vector<float> values;

    explicit Texture(std::uint64_t seed) {
        Rng rng(seed);
        values.resize(static_cast<std::size_t>(coarse) * coarse);
        for (auto& v : values) v = static_cast<float>(rng.uniform());
    }

    float sample(double x, double y) const {
        auto wrap = [this](int i) { return ((i % coarse) + coarse) % coarse; };
        double gx = x / 6.0, gy = y / 6.0;
        int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
        double fx = gx - x0, fy = gy - y0;
        auto at = [&](int yy, int xx) {
            return values[static_cast<std::size_t>(wrap(yy)) * coarse + wrap(xx)];
        };
        double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
        double bot = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
        return static_cast<float>(top * (1 - fy) + bot * fy);
    }
};

VideoTensor translating_video(int frames, int side, double ux, double uy, std::uint64_t seed) {
    Texture tex(seed);
    VideoTensor v(frames, side, side, 3);
    for (int t = 0; t < frames; ++t)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                float p = tex.sample(x - ux * t, y - uy * t);
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = p;
            }
    return v;
}

VideoTensor zooming_video(int frames, int side, double rate, std::uint64_t seed) {
    Texture tex(seed);
    VideoTensor v(frames, side, side, 3);
    double cx = (side - 1) / 2.0, cy = (side - 1) / 2.0;
    for (int t = 0; t < frames; ++t) {
        double s = std::pow(rate, t);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                float p = tex.sample(cx + (x - cx) / s, cy + (y - cy) / s);
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = p;
            }
    }
    return v;
}

VideoTensor constant_video(int frames, int side, float value) {
    return VideoTensor(frames, side, side, 3, value);
}

VideoTensor stripe_video(int frames, int side) {
    VideoTensor v(frames, side, side, 3);
    for (int t = 0; t < frames; ++t)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                float p = (x / 2) % 2 == 0 ? 1.0f : 0.0f;  // vertical stripes, period 4
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = p;
            }
    return v;
}

VideoTensor rotate90(const VideoTensor& v) {
    VideoTensor out(v.frames, v.width, v.height, v.channels);
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x)
                for (int c = 0; c < v.channels; ++c)
                    out.at(t, x, v.height - 1 - y, c) = v.at(t, y, x, c);
    return out;
}

}  // namespace

TEST_CASE("scene detection") {
    auto constant = constant_video(20, 16, 0.4f);
    CHECK(detect_scenes(constant, 8.0).empty());

    // two constant segments spliced at frame 12
    VideoTensor spliced = constant_video(24, 16, 0.2f);
    for (int t = 12; t < 24; ++t)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c) spliced.at(t, y, x, c) = 0.8f;
    auto cuts = detect_scenes(spliced, 8.0);
    REQUIRE(cuts.size() == 1);
    CHECK(cuts[0] == 12);

    // infinite threshold: no cuts regardless of content
    CHECK(detect_scenes(spliced, std::numeric_limits<double>::infinity()).empty());

    CHECK_THROWS_AS((void)detect_scenes(constant_video(1, 16, 0.0f), 8.0), GeometryError);
}

TEST_CASE("aesthetic score averages three sampled frames") {
    // scorer keyed on the frame's mean brightness
    FrameScorer mean_scorer = [](const VideoTensor& f) {
        double acc = 0.0;
        for (float p : f.data) acc += p;
        return 10.0 * acc / static_cast<double>(f.data.size());
    };
    VideoTensor v(9, 8, 8, 3);
    for (int t = 0; t < 9; ++t) {
        float val = t == 0 ? 0.4f : (t == 4 ? 0.5f : (t == 8 ? 0.6f : 0.05f));
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = val;
    }
    CHECK(aesthetic_score(v, mean_scorer) == doctest::Approx(5.0));

    auto single = constant_video(1, 8, 0.5f);
    CHECK(aesthetic_score(single, mean_scorer) == doctest::Approx(5.0));

    // reference scorer ranks sharp gradient above flat gray
    VideoTensor sharp(1, 16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) sharp.at(0, y, x, c) = (x + y) % 2 ? 1.0f : 0.0f;
    auto flat = constant_video(1, 16, 0.5f);
    CHECK(reference_aesthetic_scorer(sharp) > reference_aesthetic_scorer(flat));
}

TEST_CASE("aesthetic scorer monotone under brightening toward saturation") {
    auto v = translating_video(1, 32, 0, 0, 5);
    double prev = reference_aesthetic_scorer(v);
    for (double c : {0.2, 0.4, 0.6, 0.8}) {
        VideoTensor shifted = v;
        for (auto& p : shifted.data) p = std::min(1.0f, p + static_cast<float>(c));
        double cur = reference_aesthetic_scorer(shifted);
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
}

TEST_CASE("optical flow on static and translating content") {
    auto still = translating_video(5, 32, 0, 0, 7);
    CHECK(flow_score(still) == doctest::Approx(0.0));

    auto moving = translating_video(5, 32, 2.0, 0.0, 8);
    CHECK(flow_score(moving) == doctest::Approx(2.0).epsilon(0.125));

    // flow score invariant under uniform brightness offset (unclipped range)
    VideoTensor dimmed = moving;
    for (auto& p : dimmed.data) p = p * 0.5f + 0.1f;
    CHECK(flow_score(dimmed) == doctest::Approx(flow_score(moving)).epsilon(0.05));

    CHECK_THROWS_AS((void)flow_score(constant_video(1, 32, 0.1f)), GeometryError);
}

TEST_CASE("flow score is rotation-of-content invariant") {
    auto v = translating_video(6, 32, 1.0, 0.0, 9);
    auto r = rotate90(v);
    CHECK(flow_score(r) == doctest::Approx(flow_score(v)).epsilon(0.15));
}

TEST_CASE("text area detector") {
    auto blank = constant_video(3, 32, 0.3f);
    CHECK(ocr_area_ratio(blank, reference_text_detector) == doctest::Approx(0.0));

    auto stripes = stripe_video(3, 32);
    double ratio = ocr_area_ratio(stripes, reference_text_detector);
    CHECK(ratio > 0.5);

    auto texture = translating_video(3, 32, 0, 0, 11);
    CHECK(ocr_area_ratio(texture, reference_text_detector) < 0.3);
}

TEST_CASE("camera motion classification") {
    CameraThresholds th;

    FlowField zero;
    zero.grid_h = zero.grid_w = 4;
    zero.u.assign(16, 0.0f);
    zero.v.assign(16, 0.0f);
    CHECK(camera_motion({zero}, th) == "static");
    CHECK(camera_motion({zero}, {0.01, 0.001}) == "static");

    FlowField right = zero;
    right.u.assign(16, 5.0f);  // content moving right => camera pans left
    CHECK(camera_motion({right}, th) == "pan left");

    FlowField left = zero;
    left.u.assign(16, -3.0f);
    CHECK(camera_motion({left}, th) == "pan right");

    FlowField down = zero;
    down.v.assign(16, 4.0f);  // content moving down => camera tilts up
    CHECK(camera_motion({down}, th) == "tilt up");

    // radially outward field => zoom in
    FlowField out;
    out.grid_h = out.grid_w = 5;
    out.u.resize(25);
    out.v.resize(25);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            out.at_u(y, x) = static_cast<float>(x - 2);
            out.at_v(y, x) = static_cast<float>(y - 2);
        }
    CHECK(camera_motion({out}, th) == "zoom in");

    FlowField in = out;
    for (auto& u : in.u) u = -u;
    for (auto& v : in.v) v = -v;
    CHECK(camera_motion({in}, th) == "zoom out");

    CHECK_THROWS_AS((void)camera_motion({}, th), ValueError);
}

TEST_CASE("flow score of real zooming content is positive with zoom-in label") {
    auto v = zooming_video(5, 48, 1.12, 13);
    CHECK(flow_score(v) > 0.2);
    CameraThresholds th;
    th.translation = 0.5;
    th.divergence = 0.01;
    CHECK(camera_motion(optical_flow(v), th) == "zoom in");
}

TEST_CASE("run_pipeline end to end") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "sora_prep_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "in");

    // planted corpus: moving textures (kept), static clips (dropped: low
    // flow), stripe clips (dropped: text)
    std::vector<PrepInput> inputs;
    auto add = [&](const std::string& id, const VideoTensor& v, const std::string& caption) {
        auto path = dir / "in" / (id + ".vten");
        vten_save_video(path, v);
        inputs.push_back({id, path, caption, 4.0});
    };
    add("moving_a", translating_video(12, 32, 2.0, 0.0, 21), "texture drifting right");
    add("moving_b", translating_video(12, 32, 0.0, -1.0, 22), "texture drifting up");
    add("static_a", translating_video(12, 32, 0.0, 0.0, 23), "still texture");
    add("static_b", constant_video(12, 32, 0.55f), "flat color");
    add("text_a", stripe_video(12, 32), "stripes");

    PrepConfig cfg;
    cfg.output_dir = dir / "clips";
    cfg.workers = 3;
    auto result = run_pipeline(inputs, cfg);
    CHECK(result.errors.empty());
    REQUIRE(result.records.size() >= 5);

    int kept = 0;
    for (const auto& r : result.records) {
        if (r.source_id.rfind("moving", 0) == 0) {
            CHECK(r.keep);
            CHECK(r.flow > 0.5);
            CHECK_FALSE(r.path.empty());
            CHECK(fs::exists(r.path));
        }
        if (r.source_id.rfind("static", 0) == 0) CHECK_FALSE(r.keep);
        if (r.source_id.rfind("text", 0) == 0) {
            CHECK_FALSE(r.keep);
            CHECK(r.ocr_ratio > 0.3);
        }
        if (r.keep) ++kept;
        // captions carry the appended scores
        CHECK(r.caption.find(" aesthetic score: ") != std::string::npos);
        CHECK(r.caption.find(", motion score: ") != std::string::npos);
    }
    CHECK(kept >= 2);

    // determinism: rerun gives a byte-identical manifest
    auto result2 = run_pipeline(inputs, cfg);
    CHECK(manifest_csv(result.records) == manifest_csv(result2.records));

    // per-clip purity: input order does not matter after sorting
    std::vector<PrepInput> shuffled{inputs[3], inputs[0], inputs[4], inputs[2], inputs[1]};
    auto result3 = run_pipeline(shuffled, cfg);
    CHECK(manifest_csv(result.records) == manifest_csv(result3.records));

    // unreadable input: error recorded, pipeline continues
    std::vector<PrepInput> with_bad = inputs;
    with_bad.push_back({"missing", dir / "in" / "nope.vten", "x", 4.0});
    auto result4 = run_pipeline(with_bad, cfg);
    CHECK(result4.errors.size() == 1);
    CHECK(result4.records.size() == result.records.size());

    // empty input set
    auto empty = run_pipeline({}, cfg);
    CHECK(empty.records.empty());
    CHECK(manifest_csv(empty.records) ==
          "clip_id,path,width,height,frames,fps,caption,aes,flow,ocr_ratio,camera_motion,keep\n");

    fs::remove_all(dir);
}

TEST_CASE("manifest csv round trip with commas in captions") {
    ClipRecord r;
    r.clip_id = "clip_000";
    r.path = "/tmp/clip_000.vten";
    r.width = 32;
    r.height = 32;
    r.frames = 12;
    r.fps = 4.0;
    r.caption = "a cat. aesthetic score: 5.5, motion score: 10, camera motion: pan left";
    r.aesthetic = 5.5;
    r.flow = 10.0;
    r.ocr_ratio = 0.02;
    r.camera = "pan left";
    r.keep = true;
    auto text = manifest_csv({r});
    auto back = parse_manifest_csv(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0].clip_id == r.clip_id);
    CHECK(back[0].caption == r.caption);
    CHECK(back[0].flow == doctest::Approx(10.0));
    CHECK(back[0].keep);
}

TEST_CASE("stats csv histograms") {
    std::vector<ClipRecord> records;
    for (int i = 0; i < 10; ++i) {
        ClipRecord r;
        r.clip_id = "c" + std::to_string(i);
        r.frames = 8 + i;
        r.fps = 4.0;
        r.width = r.height = 32;
        r.aesthetic = i;
        r.flow = 0.1 * i;
        r.ocr_ratio = 0.05 * i;
        records.push_back(r);
    }
    auto text = stats_csv(records);
    CHECK(text.find("duration_s") != std::string::npos);
    CHECK(text.find("short_side_px") != std::string::npos);
    CHECK(text.find("aesthetic") != std::string::npos);
    CHECK(text.find("flow") != std::string::npos);
    CHECK(text.find("ocr_ratio") != std::string::npos);

    CHECK(stats_csv({}) == "metric,bin_lo,bin_hi,count\n");
}
