#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "sora/codec.hpp"
#include "sora/optim.hpp"

namespace sora {

// Checkpoint layout: one VTEN file per named parameter plus a text manifest
// of shapes; optimizer moments under opt/, free-form run state in state.txt.

void save_params(const std::filesystem::path& dir, const ParamSet& params);

// Loads into already-constructed tensors; shapes must match the manifest.
void load_params(const std::filesystem::path& dir, const ParamSet& params);

// name -> shape, straight from manifest.txt (for model-describe).
std::map<std::string, Shape> read_manifest(const std::filesystem::path& dir);

void save_adam(const std::filesystem::path& dir, const Adam& opt);
void load_adam(const std::filesystem::path& dir, Adam& opt);

void save_state(const std::filesystem::path& dir,
                const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_state(const std::filesystem::path& dir);

void save_channel_stats(const std::filesystem::path& dir, const ChannelStats& stats);
ChannelStats load_channel_stats(const std::filesystem::path& dir);

}  // namespace sora
