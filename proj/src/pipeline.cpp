#include "sora/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sora/csv.hpp"
#include "sora/vten.hpp"

namespace sora {

std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir) {
    std::vector<DatasetItem> items;
    auto catalog = dir / "catalog.csv";
    auto manifest = dir / "manifest.csv";
    if (std::filesystem::exists(catalog)) {
        for (const auto& r : load_catalog(catalog)) {
            DatasetItem it;
            it.clip_id = r.clip_id;
            it.path = r.path;
            it.width = r.width;
            it.height = r.height;
            it.frames = r.frames;
            it.fps = r.fps;
            it.caption = r.caption;
            it.motion = r.motion;
            items.push_back(std::move(it));
        }
    } else if (std::filesystem::exists(manifest)) {
        std::ifstream is(manifest);
        std::stringstream buf;
        buf << is.rdbuf();
        for (const auto& r : parse_manifest_csv(buf.str())) {
            if (!r.keep || r.path.empty()) continue;
            DatasetItem it;
            it.clip_id = r.clip_id;
            it.path = r.path;
            it.width = r.width;
            it.height = r.height;
            it.frames = r.frames;
            it.fps = r.fps;
            it.caption = r.caption;
            it.motion = r.camera;
            items.push_back(std::move(it));
        }
    } else if (std::filesystem::is_directory(dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            bool is_clip = entry.is_regular_file() && entry.path().extension() == ".vten";
            bool is_folder_clip = entry.is_directory();
            if (!is_clip && !is_folder_clip) continue;
            DatasetItem it;
            it.clip_id = entry.path().stem().string();
            it.path = entry.path();
            if (is_clip) {
                Shape shape = vten_read_shape(entry.path());
                if (shape.size() != 4 && shape.size() != 3) continue;
                bool image = shape.size() == 3;
                it.frames = image ? 1 : shape[0];
                it.height = image ? shape[0] : shape[1];
                it.width = image ? shape[1] : shape[2];
            } else {
                VideoTensor v;
                try {
                    v = load_video_any(entry.path());
                } catch (const Error&) {
                    continue;  // not a frame folder
                }
                it.frames = v.frames;
                it.height = v.height;
                it.width = v.width;
            }
            it.caption = "clip " + it.clip_id;
            items.push_back(std::move(it));
        }
    } else {
        throw IoError("no dataset at " + dir.string());
    }
    if (items.empty()) throw ValueError("dataset is empty: " + dir.string());
    std::sort(items.begin(), items.end(),
              [](const DatasetItem& a, const DatasetItem& b) { return a.clip_id < b.clip_id; });
    return items;
}

VelocityFn model_velocity_fn(const StditModel& model, const TextEmbedding& text, double fps) {
    Tensor tokens = text.active();
    return [&model, tokens, fps](const Tensor& x, const std::vector<double>& t) {
        Conditioning cond;
        cond.timesteps = t;
        cond.fps = fps;
        return model.predict_velocity(x, cond, tokens);
    };
}

// ------------------------------------------------------------------- codec

CodecTrainResult run_codec_train(const KitConfig& cfg, const std::filesystem::path& data_dir,
                                 const std::filesystem::path& out_dir) {
    auto items = load_dataset(data_dir);
    std::vector<VideoTensor> clips;
    clips.reserve(items.size());
    for (const auto& it : items) clips.push_back(vten_load_video(it.path));

    VideoCodec codec(cfg.codec, Rng(cfg.seed).fork("codec-init"));
    CodecTrainConfig tc = cfg.codec_train;
    tc.seed = Rng(cfg.seed).fork("codec-train").key();
    auto result = codec_train(codec, clips, tc);

    save_codec(out_dir, codec);
    std::ofstream log(out_dir / "codec_loss.csv");
    log << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_log.size(); ++i)
        log << i << "," << result.loss_log[i] << "\n";
    std::ofstream eval(out_dir / "codec_eval.csv");
    eval << "step,roundtrip_mse\n";
    for (const auto& [step, mse] : result.eval_log) eval << step << "," << mse << "\n";
    return result;
}

void save_codec(const std::filesystem::path& dir, VideoCodec& codec) {
    ParamSet params;
    codec.collect(params);
    save_params(dir, params);
    save_channel_stats(dir, codec.stats);
}

VideoCodec load_codec(const KitConfig& cfg, const std::filesystem::path& codec_dir) {
    VideoCodec codec(cfg.codec, Rng(0));
    ParamSet params;
    codec.collect(params);
    load_params(codec_dir, params);
    codec.stats = load_channel_stats(codec_dir);
    return codec;
}

// ---------------------------------------------------------------- training

namespace {

// Clip pixels fitted to a bucket, then encoded and channel-normalized.
class LatentCache {
  public:
    LatentCache(const VideoCodec& codec, const std::vector<DatasetItem>& items)
        : codec_(codec) {
        for (const auto& it : items) by_id_[it.clip_id] = &it;
    }

    const DatasetItem& item(const std::string& clip_id) const {
        auto it = by_id_.find(clip_id);
        if (it == by_id_.end()) throw ValueError("unknown clip id " + clip_id);
        return *it->second;
    }

    Tensor latent(const std::string& clip_id, const Bucket& bucket) {
        std::string key = clip_id + "|" + bucket.label + "|" + std::to_string(bucket.frames) +
                          "|" + bucket.aspect_str();
        auto hit = latents_.find(key);
        if (hit != latents_.end()) return hit->second;
        const DatasetItem& it = item(clip_id);
        VideoTensor video = raw(clip_id, it);
        VideoTensor fitted =
            trim_frames(fit_to(video, bucket.pixel_height(), bucket.pixel_width()),
                        bucket.frames);
        LatentVideo z = codec_.encode(fitted);
        Tensor zn = channel_normalize(z.to_tensor(), codec_.stats);
        latents_[key] = zn;
        return zn;
    }

  private:
    VideoTensor raw(const std::string& clip_id, const DatasetItem& it) {
        auto hit = videos_.find(clip_id);
        if (hit != videos_.end()) return hit->second;
        VideoTensor v = load_video_any(it.path);
        videos_[clip_id] = v;
        return v;
    }

    const VideoCodec& codec_;
    std::map<std::string, const DatasetItem*> by_id_;
    std::map<std::string, VideoTensor> videos_;
    std::map<std::string, Tensor> latents_;
};

std::vector<Bucket> stage_buckets(const KitConfig& cfg, const StageConfig& stage) {
    std::vector<Bucket> out;
    for (const auto& b : cfg.buckets) {
        bool res_ok = std::find(stage.resolutions.begin(), stage.resolutions.end(), b.label) !=
                      stage.resolutions.end();
        bool frames_ok =
            std::find(stage.frames.begin(), stage.frames.end(), b.frames) != stage.frames.end();
        if (res_ok && frames_ok) out.push_back(b);
    }
    if (out.empty())
        throw ValueError("stage " + std::to_string(stage.id) + " admits no buckets");
    return out;
}

std::uint64_t fnv_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void save_train_checkpoint(const std::filesystem::path& dir, StditModel& model, Adam& opt,
                           int stage_done, std::int64_t global_step, std::uint64_t epochs,
                           std::uint64_t items) {
    ParamSet params;
    model.collect(params);
    save_params(dir, params);
    save_adam(dir, opt);
    save_state(dir, {{"stage_done", std::to_string(stage_done)},
                     {"global_step", std::to_string(global_step)},
                     {"epoch_counter", std::to_string(epochs)},
                     {"item_counter", std::to_string(items)}});
}

}  // namespace

TrainResult run_train(const KitConfig& cfg, const std::filesystem::path& data_dir,
                      const std::filesystem::path& codec_dir,
                      const std::filesystem::path& out_dir,
                      const std::filesystem::path& resume_from) {
    auto items = load_dataset(data_dir);
    VideoCodec codec = load_codec(cfg, codec_dir);
    LatentCache cache(codec, items);

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

    StditModel model = StditModel::init(cfg.model, Rng(cfg.seed).fork("model-init"));
    ParamSet params;
    model.collect(params);
    Adam opt({cfg.stages.front().lr, 0.9, 0.999, cfg.flow.adam_eps});
    // Randomness comes from keyed substreams of the run seed, one per epoch
    // plan and one per training item, so resumed runs and runs differing only
    // in one knob share every other draw.
    const Rng run_rng = Rng(cfg.seed).fork("train");
    std::uint64_t epoch_counter = 0;
    std::uint64_t item_counter = 0;
    int first_stage_index = 0;
    std::int64_t global_step = 0;

    if (!resume_from.empty()) {
        load_params(resume_from, params);
        load_adam(resume_from, opt);
        auto state = load_state(resume_from);
        int stage_done = std::stoi(state.at("stage_done"));
        global_step = std::stoll(state.at("global_step"));
        epoch_counter = std::stoull(state.at("epoch_counter"));
        item_counter = std::stoull(state.at("item_counter"));
        while (first_stage_index < static_cast<int>(cfg.stages.size()) &&
               cfg.stages[static_cast<std::size_t>(first_stage_index)].id <= stage_done)
            ++first_stage_index;
    }

    std::filesystem::create_directories(out_dir);
    TrainResult result;

    // pre-embed captions once; text embedding is deterministic
    std::map<std::string, TextEmbedding> text_cache;
    for (const auto& it : items) {
        if (it.caption.empty()) throw ValueError("clip " + it.clip_id + " has no caption");
        text_cache.emplace(it.clip_id,
                           embed_text(it.caption, cfg.max_text_tokens, cfg.model.text_dim));
    }

    for (int si = first_stage_index; si < static_cast<int>(cfg.stages.size()); ++si) {
        const StageConfig& stage = cfg.stages[static_cast<std::size_t>(si)];
        auto buckets = stage_buckets(cfg, stage);
        opt.set_lr(stage.lr);

        int steps_done = 0;
        std::int64_t eligible = 0, masked = 0;
        while (steps_done < stage.steps) {
            Rng plan_rng = run_rng.fork("plan", epoch_counter++);
            EpochPlan plan = plan_epoch(samples, buckets, plan_rng);
            if (plan.batches.empty())
                throw ValueError("stage " + std::to_string(stage.id) +
                                 ": no full batch fits any bucket");
            for (const auto& batch : plan.batches) {
                if (steps_done >= stage.steps) break;
                const Bucket& bucket = buckets[batch.bucket_index];
                std::vector<Tensor> losses;
                for (const auto& clip_id : batch.clip_ids) {
                    Rng item_rng = run_rng.fork("item", item_counter++);
                    const DatasetItem& it = cache.item(clip_id);
                    Tensor z = cache.latent(clip_id, bucket);
                    int latent_frames = z.shape()[0];
                    FrameMask mask;
                    if (latent_frames >= 2) {
                        ++eligible;
                        auto sampled = sample_pattern(item_rng, latent_frames, stage.mask_prob);
                        if (sampled.pattern != MaskPattern::NoMask) ++masked;
                        mask = sampled.mask;
                    } else {
                        mask.unmasked.assign(1, 0);
                    }
                    double tokens = static_cast<double>(latent_frames) *
                                    (z.shape()[1] / cfg.model.patch) *
                                    (z.shape()[2] / cfg.model.patch);
                    auto fn = model_velocity_fn(model, text_cache.at(clip_id), it.fps);
                    losses.push_back(
                        flow_training_loss(fn, z, mask, cfg.flow, tokens, item_rng));
                }
                auto loss = mul_scalar(sum_all(concat(losses, 0)),
                                       1.0 / static_cast<double>(losses.size()));
                backward(loss);
                opt.step(params);
                double lv = loss.item();
                if (!std::isfinite(lv)) throw NumericError("training loss became non-finite");
                result.loss_log.push_back(lv);
                result.loss_stage.push_back(stage.id);
                ++steps_done;
                ++global_step;
            }
        }

        StageLog log;
        log.stage_id = stage.id;
        log.steps = steps_done;
        log.masked_fraction =
            eligible ? static_cast<double>(masked) / static_cast<double>(eligible) : 0.0;
        result.stages.push_back(log);

        auto stage_dir = out_dir / ("stage" + std::to_string(stage.id));
        save_train_checkpoint(stage_dir, model, opt, stage.id, global_step, epoch_counter,
                              item_counter);
    }

    result.final_checkpoint = out_dir / "final";
    save_train_checkpoint(result.final_checkpoint, model, opt, cfg.stages.back().id,
                          global_step, epoch_counter, item_counter);

    std::ofstream loss_csv(out_dir / "loss.csv");
    loss_csv << "step,stage,loss\n";
    for (std::size_t i = 0; i < result.loss_log.size(); ++i)
        loss_csv << i << "," << result.loss_stage[i] << "," << result.loss_log[i] << "\n";
    std::ofstream mask_csv(out_dir / "mask_stats.csv");
    mask_csv << "stage,masked_fraction\n";
    for (const auto& s : result.stages) mask_csv << s.stage_id << "," << s.masked_fraction << "\n";
    return result;
}

StditModel load_model(const KitConfig& cfg, const std::filesystem::path& checkpoint_dir) {
    StditModel model = StditModel::init(cfg.model, Rng(0));
    ParamSet params;
    model.collect(params);
    load_params(checkpoint_dir, params);
    return model;
}

// -------------------------------------------------------------- validation

std::vector<GridCell> run_validate(const KitConfig& cfg, const StditModel& model,
                                   const VideoCodec& codec,
                                   const std::filesystem::path& val_dir) {
    auto items = load_dataset(val_dir);
    std::vector<GridCell> cells;
    for (const auto& len_label : cfg.grid.length_labels) {
        int frames = cfg.seconds_to_frames(len_label);
        for (const auto& res_label : cfg.grid.resolution_labels) {
            GridCell cell;
            cell.length = len_label;
            cell.resolution = res_label;
            cell.frames = frames;
            cell.px = cfg.resolve_px(res_label);

            double acc = 0.0;
            int used = 0;
            for (const auto& it : items) {
                if (used >= cfg.grid.clips_per_cell) break;
                if (it.frames < frames) continue;
                VideoTensor v = load_video_any(it.path);
                VideoTensor fitted = trim_frames(fit_to(v, cell.px, cell.px), frames);
                LatentVideo z = codec.encode(fitted);
                Tensor zn = channel_normalize(z.to_tensor(), codec.stats);
                FrameMask mask;
                mask.unmasked.assign(static_cast<std::size_t>(zn.shape()[0]), 0);
                TextEmbedding text =
                    embed_text(it.caption, cfg.max_text_tokens, cfg.model.text_dim);
                auto fn = model_velocity_fn(model, text, it.fps);
                std::uint64_t seed = fnv_hash(it.clip_id + "|" + len_label + "|" + res_label);
                acc += flow_validation_loss(fn, zn, mask, seed);
                ++used;
            }
            if (used > 0) {
                cell.present = true;
                cell.clips = used;
                cell.loss = acc / used;
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

std::string grid_csv(const std::vector<GridCell>& cells) {
    std::string out = "length,resolution,frames,px,clips,loss\n";
    for (const auto& c : cells) {
        out += c.length + "," + c.resolution + "," + std::to_string(c.frames) + "," +
               std::to_string(c.px) + "," + std::to_string(c.clips) + ",";
        out += c.present ? std::to_string(c.loss) : std::string("absent");
        out += "\n";
    }
    return out;
}

double grid_total(const std::vector<GridCell>& cells) {
    double acc = 0.0;
    for (const auto& c : cells)
        if (c.present) acc += c.loss;
    return acc;
}

// -------------------------------------------------------------- generation

std::vector<int> parse_condition_spec(const std::string& spec, int video_frames) {
    std::vector<int> out;
    if (spec.empty()) return out;
    auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw ValueError("bad condition spec '" + spec + "' (want first:K, last:K or frames:i,j)");
    std::string kind = spec.substr(0, colon);
    std::string arg = spec.substr(colon + 1);
    auto parse_int = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            int v = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ValueError("bad number '" + s + "' in condition spec");
        }
    };
    if (kind == "first" || kind == "last") {
        int k = parse_int(arg);
        if (k < 1 || k > video_frames)
            throw ValueError("condition spec names " + std::to_string(k) + " frames of " +
                             std::to_string(video_frames));
        for (int i = 0; i < k; ++i) out.push_back(kind == "first" ? i : video_frames - k + i);
    } else if (kind == "frames") {
        std::istringstream is(arg);
        std::string part;
        while (std::getline(is, part, ',')) {
            int f = parse_int(part);
            if (f < 0 || f >= video_frames)
                throw ValueError("condition frame " + std::to_string(f) + " out of range 0.." +
                                 std::to_string(video_frames - 1));
            out.push_back(f);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        if (out.empty()) throw ValueError("condition spec names no frames");
    } else {
        throw ValueError("unknown condition spec kind '" + kind + "'");
    }
    return out;
}

std::vector<char> condition_latent_mask(const std::vector<int>& video_frame_indices,
                                        int latent_frames) {
    std::vector<char> mask(static_cast<std::size_t>(latent_frames), 0);
    for (int j : video_frame_indices)
        mask[static_cast<std::size_t>(latent_index_of_frame(j, latent_frames))] = 1;
    return mask;
}

VideoTensor run_generate(const KitConfig& cfg, const StditModel& model, const VideoCodec& codec,
                         const GenerateRequest& req) {
    if (req.frames < 1) throw ValueError("generate: frames must be >= 1");
    int px = cfg.resolve_px(req.resolution);
    int latent_frames = latent_frames_for(req.frames);
    int grid = px / kSpatialFactor;
    Shape latent_shape{latent_frames, grid, grid, cfg.model.latent_channels};

    std::string caption = req.prompt;
    if (req.aesthetic || req.motion || req.camera) {
        ScoredCaption sc;
        sc.caption = req.prompt;
        sc.aesthetic = req.aesthetic.value_or(5.5);
        sc.motion = req.motion.value_or(5.0);
        sc.camera = req.camera;
        caption = format_caption(sc);
    }
    TextEmbedding text = embed_text(caption, cfg.max_text_tokens, cfg.model.text_dim);
    if (text.length < 1) throw ValueError("generate: prompt produced no tokens");
    auto fn = model_velocity_fn(model, text, req.fps);

    std::vector<int> cond_frames = parse_condition_spec(req.condition_spec, req.frames);
    std::optional<SampleConditioning> cond;
    Tensor cond_latent_raw;  // unnormalized ground truth for the exact splice
    if (!cond_frames.empty()) {
        if (req.condition_path.empty())
            throw ValueError("generate: condition spec given without --condition-frames input");
        VideoTensor source = load_video_any(req.condition_path);
        VideoTensor fitted = fit_to(source, px, px);
        // assemble a full-length video carrying the conditioning pixels at
        // their target positions (zeros elsewhere), then encode once
        VideoTensor assembled(req.frames, px, px, fitted.channels, 0.0f);
        for (std::size_t i = 0; i < cond_frames.size(); ++i) {
            int src = std::min(static_cast<int>(i), fitted.frames - 1);
            int dst = cond_frames[i];
            for (int y = 0; y < px; ++y)
                for (int x = 0; x < px; ++x)
                    for (int c = 0; c < fitted.channels; ++c)
                        assembled.at(dst, y, x, c) = fitted.at(src, y, x, c);
        }
        LatentVideo z = codec.encode(assembled);
        cond_latent_raw = z.to_tensor();
        SampleConditioning sc;
        sc.latent = channel_normalize(cond_latent_raw, codec.stats);
        sc.unmasked = condition_latent_mask(cond_frames, latent_frames);
        cond = std::move(sc);
    }

    Rng rng = Rng(req.seed).fork("generate");
    Tensor sampled = euler_sample(fn, latent_shape, cond ? &*cond : nullptr, req.steps, rng);
    Tensor latent = channel_denormalize(sampled, codec.stats);

    if (cond) {
        // conditioned latent frames decode from the exact encoder output,
        // untouched by the normalize/denormalize round trip
        std::vector<float> data(latent.data().begin(), latent.data().end());
        std::size_t frame_len = latent.numel() / static_cast<std::size_t>(latent_frames);
        auto src = cond_latent_raw.data();
        for (int f = 0; f < latent_frames; ++f)
            if (cond->unmasked[static_cast<std::size_t>(f)])
                std::copy_n(src.data() + static_cast<std::size_t>(f) * frame_len, frame_len,
                            data.data() + static_cast<std::size_t>(f) * frame_len);
        latent = Tensor::from_data(latent.shape(), std::move(data));
    }

    LatentVideo z = LatentVideo::from_tensor(latent, codec.stats);
    return codec.decode(z, req.frames);
}

}  // namespace sora
