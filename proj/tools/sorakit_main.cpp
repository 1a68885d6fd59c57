// Command-line front end: synthetic data, data prep, codec and diffusion
// training, validation grids, sampling and bucket planning.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "sora/pipeline.hpp"

namespace {

using namespace sora;

KitConfig get_config(const std::string& config_path) {
    if (config_path.empty()) return default_config();
    return load_config(config_path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-sora-kit: desk-scale video generation stack"};
    app.require_subcommand(1);
    app.fallthrough();  // app-level --config may follow the subcommand

    std::string config_path;
    app.add_option("--config", config_path, "config file (defaults baked in)");

    // ---- init-config
    auto* init_cmd = app.add_subcommand("init-config", "write the documented default config");
    std::string init_out = "sorakit.conf";
    init_cmd->add_option("--out", init_out, "output path");
    init_cmd->callback([&] {
        write_text(init_out, default_config_text());
        std::printf("wrote %s\n", init_out.c_str());
    });

    // ---- synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic moving-shape dataset");
    int synth_n = 64, synth_val = 0;
    std::string synth_out = "data";
    synth_cmd->add_option("--n", synth_n, "training clips");
    synth_cmd->add_option("--val", synth_val, "validation clips (written to <out>/val)");
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        SynthSpec spec;
        spec.fps = cfg.fps;
        auto train = make_synthetic(synth_n, spec, cfg.seed, synth_out);
        std::printf("wrote %zu clips to %s\n", train.records.size(), synth_out.c_str());
        if (synth_val > 0) {
            SynthSpec val_spec = spec;
            val_spec.frame_counts = {64};  // long clips trim to any grid cell
            val_spec.include_images = false;
            auto val = make_synthetic(synth_val, val_spec, cfg.seed ^ 0x5eedull,
                                      std::filesystem::path(synth_out) / "val");
            std::printf("wrote %zu validation clips to %s/val\n", val.records.size(),
                        synth_out.c_str());
        }
    });

    // ---- prep
    auto* prep_cmd = app.add_subcommand("prep", "scene-cut, score and filter raw videos");
    std::string prep_in, prep_out = "prepped";
    prep_cmd->add_option("--input", prep_in, "dataset dir (catalog.csv + VTEN videos)")
        ->required();
    prep_cmd->add_option("--out", prep_out, "output directory");
    double prep_scene = 8.0, prep_aes = 2.0, prep_flow = 0.05, prep_ocr = 0.3;
    prep_cmd->add_option("--scene-threshold", prep_scene, "scene cut threshold");
    prep_cmd->add_option("--aes-min", prep_aes, "minimum aesthetic score");
    prep_cmd->add_option("--flow-min", prep_flow, "minimum flow score");
    prep_cmd->add_option("--ocr-max", prep_ocr, "maximum text area ratio");
    prep_cmd->callback([&] {
        auto items = load_dataset(prep_in);
        std::vector<PrepInput> inputs;
        for (const auto& it : items)
            inputs.push_back({it.clip_id, it.path, it.caption, it.fps});
        PrepConfig pc;
        pc.scene_threshold = prep_scene;
        pc.aes_min = prep_aes;
        pc.flow_min = prep_flow;
        pc.ocr_max = prep_ocr;
        pc.output_dir = std::filesystem::path(prep_out) / "clips";
        auto result = run_pipeline(inputs, pc);
        std::filesystem::create_directories(prep_out);
        write_text(std::filesystem::path(prep_out) / "manifest.csv",
                   manifest_csv(result.records));
        write_text(std::filesystem::path(prep_out) / "stats.csv", stats_csv(result.records));
        int kept = 0;
        for (const auto& r : result.records) kept += r.keep ? 1 : 0;
        std::printf("%zu clips (%d kept), %zu errors -> %s\n", result.records.size(), kept,
                    result.errors.size(), prep_out.c_str());
        for (const auto& e : result.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    });

    // ---- codec-train
    auto* ct_cmd = app.add_subcommand("codec-train", "train the stacked video codec");
    std::string ct_data, ct_out = "codec";
    ct_cmd->add_option("--data", ct_data, "dataset directory")->required();
    ct_cmd->add_option("--out", ct_out, "codec checkpoint directory");
    ct_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        auto result = run_codec_train(cfg, ct_data, ct_out);
        std::printf("codec-train: %zu steps, final round-trip mse %.6f -> %s\n",
                    result.loss_log.size(), result.eval_log.back().second, ct_out.c_str());
    });

    // ---- codec-roundtrip
    auto* rt_cmd = app.add_subcommand("codec-roundtrip", "encode+decode a video");
    std::string rt_codec, rt_in, rt_out;
    bool rt_metrics = false;
    rt_cmd->add_option("--codec", rt_codec, "codec checkpoint")->required();
    rt_cmd->add_option("--input", rt_in, "input VTEN video")->required();
    rt_cmd->add_option("--output", rt_out, "output VTEN video");
    rt_cmd->add_flag("--metrics", rt_metrics, "print SSIM / PSNR");
    rt_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        VideoCodec codec = load_codec(cfg, rt_codec);
        VideoTensor v = vten_load_video(rt_in);
        VideoTensor rec = codec.roundtrip(v);
        if (!rt_out.empty()) vten_save_video(rt_out, rec);
        if (rt_metrics) {
            auto m = compute_metrics(v, rec);
            std::printf("ssim %.4f psnr %.3f dB\n", m.ssim, m.psnr);
        }
    });

    // ---- train
    auto* train_cmd = app.add_subcommand("train", "staged rectified-flow training");
    std::string tr_data, tr_codec, tr_out = "run", tr_resume;
    train_cmd->add_option("--data", tr_data, "dataset directory")->required();
    train_cmd->add_option("--codec", tr_codec, "codec checkpoint")->required();
    train_cmd->add_option("--out", tr_out, "run directory");
    train_cmd->add_option("--resume", tr_resume, "resume from a stage checkpoint");
    train_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        auto result = run_train(cfg, tr_data, tr_codec, tr_out, tr_resume);
        for (const auto& s : result.stages)
            std::printf("stage %d: %d steps, masked fraction %.3f\n", s.stage_id, s.steps,
                        s.masked_fraction);
        std::printf("checkpoint: %s\n", result.final_checkpoint.string().c_str());
    });

    // ---- validate
    auto* val_cmd = app.add_subcommand("validate", "loss grid over lengths x resolutions");
    std::string va_ckpt, va_codec, va_val, va_out = "grid.csv";
    val_cmd->add_option("--checkpoint", va_ckpt, "model checkpoint")->required();
    val_cmd->add_option("--codec", va_codec, "codec checkpoint")->required();
    val_cmd->add_option("--val", va_val, "validation dataset directory")->required();
    val_cmd->add_option("--out", va_out, "grid CSV path");
    val_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        StditModel model = load_model(cfg, va_ckpt);
        VideoCodec codec = load_codec(cfg, va_codec);
        auto cells = run_validate(cfg, model, codec, va_val);
        write_text(va_out, grid_csv(cells));
        std::printf("grid total %.6f -> %s\n", grid_total(cells), va_out.c_str());
    });

    // ---- sample
    auto* sample_cmd = app.add_subcommand("sample", "generate a video from a prompt");
    GenerateRequest req;
    std::string sa_ckpt, sa_codec, sa_out = "sample.vten", sa_cond_frames;
    double sa_aes = -1.0, sa_motion = -1.0;
    std::string sa_camera;
    sample_cmd->add_option("--checkpoint", sa_ckpt, "model checkpoint")->required();
    sample_cmd->add_option("--codec", sa_codec, "codec checkpoint")->required();
    sample_cmd->add_option("--prompt", req.prompt, "text prompt")->required();
    sample_cmd->add_option("--steps", req.steps, "Euler steps (default 30)");
    sample_cmd->add_option("--seed", req.seed, "sampling seed");
    sample_cmd->add_option("--fps", req.fps, "FPS conditioning value");
    sample_cmd->add_option("--frames", req.frames, "output frame count");
    sample_cmd->add_option("--resolution", req.resolution, "resolution label (e.g. 240p)");
    sample_cmd->add_option("--condition", req.condition_spec,
                           "conditioning frames: first:K, last:K or frames:i,j");
    sample_cmd->add_option("--condition-frames", sa_cond_frames,
                           "VTEN image/video supplying the conditioning pixels");
    sample_cmd->add_option("--aes", sa_aes, "append an aesthetic score to the caption");
    sample_cmd->add_option("--motion", sa_motion, "append a motion score to the caption");
    sample_cmd->add_option("--camera", sa_camera, "append a camera motion label");
    sample_cmd->add_option("--out", sa_out, "output VTEN video");
    sample_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        StditModel model = load_model(cfg, sa_ckpt);
        VideoCodec codec = load_codec(cfg, sa_codec);
        if (sa_aes >= 0.0) req.aesthetic = sa_aes;
        if (sa_motion >= 0.0) req.motion = sa_motion;
        if (!sa_camera.empty()) req.camera = sa_camera;
        req.condition_path = sa_cond_frames;
        VideoTensor video = run_generate(cfg, model, codec, req);
        vten_save_video(sa_out, video);
        std::printf("wrote %dx%dx%d video -> %s\n", video.frames, video.height, video.width,
                    sa_out.c_str());
    });

    // ---- bucket-plan
    auto* bp_cmd = app.add_subcommand("bucket-plan", "plan an epoch over the bucket table");
    std::string bp_data, bp_out;
    bool bp_dry = false;
    std::uint64_t bp_seed = 0;
    bool bp_seed_set = false;
    bp_cmd->add_option("--data", bp_data, "dataset directory")->required();
    bp_cmd->add_flag("--dry-run", bp_dry, "emit the load report as CSV");
    bp_cmd->add_option("--out", bp_out, "write the report here instead of stdout");
    bp_cmd->add_option("--seed", bp_seed, "plan seed (default: config seed)")
        ->each([&](const std::string&) { bp_seed_set = true; });
    bp_cmd->callback([&] {
        KitConfig cfg = get_config(config_path);
        auto items = load_dataset(bp_data);
        std::vector<SampleMeta> samples;
        for (const auto& it : items) {
            SampleMeta s;
            s.clip_id = it.clip_id;
            s.width = it.width;
            s.height = it.height;
            s.frames = it.frames;
            s.fps = it.fps;
            samples.push_back(std::move(s));
        }
        Rng rng(bp_seed_set ? bp_seed : cfg.seed);
        auto plan = plan_epoch(samples, cfg.buckets, rng);
        std::printf("%zu batches, %d rejected, %d dropped from partial batches\n",
                    plan.batches.size(), plan.rejected, plan.dropped_partial);
        if (bp_dry) {
            auto report = load_report(plan, cfg.buckets);
            std::string csv = report.to_csv(cfg.buckets);
            if (bp_out.empty())
                std::fputs(csv.c_str(), stdout);
            else
                write_text(bp_out, csv);
        }
    });

    // ---- model-describe
    auto* md_cmd = app.add_subcommand("model-describe", "print the checkpoint parameter census");
    std::string md_ckpt;
    md_cmd->add_option("--checkpoint", md_ckpt, "checkpoint directory")->required();
    md_cmd->callback([&] {
        auto manifest = read_manifest(md_ckpt);
        std::size_t total = 0;
        for (const auto& [name, shape] : manifest) {
            std::size_t n = shape_numel(shape);
            total += n;
            std::printf("%-40s %-16s %zu\n", name.c_str(), shape_str(shape).c_str(), n);
        }
        std::printf("total parameters: %zu\n", total);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const sora::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
