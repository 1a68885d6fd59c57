#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sora/checkpoint.hpp"
#include "sora/config.hpp"
#include "sora/dataprep.hpp"
#include "sora/synth.hpp"

namespace sora {

// One training/validation clip as listed by a dataset directory
// (synth catalog.csv or prep manifest.csv).
struct DatasetItem {
    std::string clip_id;
    std::filesystem::path path;
    int width = 0;
    int height = 0;
    int frames = 0;
    double fps = 4.0;
    std::string caption;
    std::string motion;  // ground truth label when known
};

std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir);

// --------------------------------------------------------------- codec

CodecTrainResult run_codec_train(const KitConfig& cfg, const std::filesystem::path& data_dir,
                                 const std::filesystem::path& out_dir);

VideoCodec load_codec(const KitConfig& cfg, const std::filesystem::path& codec_dir);
void save_codec(const std::filesystem::path& dir, VideoCodec& codec);

// ------------------------------------------------------------- training

struct StageLog {
    int stage_id = 0;
    int steps = 0;
    double masked_fraction = 0.0;  // non-NoMask draws / mask-eligible draws
};

struct TrainResult {
    std::vector<double> loss_log;  // per optimizer step
    std::vector<int> loss_stage;   // stage id per step
    std::vector<StageLog> stages;
    std::filesystem::path final_checkpoint;
};

// Staged rectified-flow training over bucketed batches. Emits loss.csv and
// per-stage checkpoints under out_dir; `resume_from` continues a run from a
// stage-boundary checkpoint bit-exactly.
TrainResult run_train(const KitConfig& cfg, const std::filesystem::path& data_dir,
                      const std::filesystem::path& codec_dir,
                      const std::filesystem::path& out_dir,
                      const std::filesystem::path& resume_from = {});

StditModel load_model(const KitConfig& cfg, const std::filesystem::path& checkpoint_dir);

// Adapts a model + text embedding + fps into the sampler/loss interface.
// The embedding must outlive the returned callable.
VelocityFn model_velocity_fn(const StditModel& model, const TextEmbedding& text, double fps);

// ------------------------------------------------------------ validation

struct GridCell {
    std::string length;
    std::string resolution;
    int frames = 0;
    int px = 0;
    int clips = 0;
    double loss = 0.0;
    bool present = false;
};

std::vector<GridCell> run_validate(const KitConfig& cfg, const StditModel& model,
                                   const VideoCodec& codec,
                                   const std::filesystem::path& val_dir);

std::string grid_csv(const std::vector<GridCell>& cells);
double grid_total(const std::vector<GridCell>& cells);

// ------------------------------------------------------------ generation

struct GenerateRequest {
    std::string prompt;
    std::optional<double> aesthetic;
    std::optional<double> motion;
    std::optional<std::string> camera;
    std::filesystem::path condition_path;  // VTEN image/video, optional
    std::string condition_spec;            // "first:1", "last:2", "frames:0,5,9"
    int steps = 30;
    std::uint64_t seed = 1;
    double fps = 4.0;
    std::string resolution = "240p";
    int frames = 16;
};

VideoTensor run_generate(const KitConfig& cfg, const StditModel& model, const VideoCodec& codec,
                         const GenerateRequest& req);

// Video-frame indices named by a conditioning spec; empty spec means none.
std::vector<int> parse_condition_spec(const std::string& spec, int video_frames);

// Latent-frame conditioning flags implied by conditioned video frames.
std::vector<char> condition_latent_mask(const std::vector<int>& video_frame_indices,
                                        int latent_frames);

}  // namespace sora
