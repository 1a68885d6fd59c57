#include "sora/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "sora/vten.hpp"

namespace sora {

namespace {

std::string shape_line(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

Shape parse_shape_line(const std::string& s) {
    Shape out;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, 'x')) out.push_back(std::stoi(part));
    return out;
}

}  // namespace

void save_params(const std::filesystem::path& dir, const ParamSet& params) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw IoError("cannot write manifest in " + dir.string());
    for (const auto& e : params.entries()) {
        vten_save(dir / (e.name + ".vten"), *e.tensor);
        manifest << e.name << " " << shape_line(e.tensor->shape()) << "\n";
    }
}

void load_params(const std::filesystem::path& dir, const ParamSet& params) {
    auto manifest = read_manifest(dir);
    for (const auto& e : params.entries()) {
        auto it = manifest.find(e.name);
        if (it == manifest.end())
            throw IoError("checkpoint missing parameter '" + e.name + "' in " + dir.string());
        if (it->second != e.tensor->shape())
            throw IoError("checkpoint shape mismatch for '" + e.name + "'");
        auto loaded = vten_load_tensor(dir / (e.name + ".vten"));
        if (loaded.shape() != e.tensor->shape())
            throw IoError("checkpoint tensor shape mismatch for '" + e.name + "'");
        *e.tensor = loaded.detached(/*requires_grad=*/true);
    }
}

std::map<std::string, Shape> read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) throw IoError("cannot read manifest in " + dir.string());
    std::map<std::string, Shape> out;
    std::string name, shape;
    while (is >> name >> shape) out[name] = parse_shape_line(shape);
    return out;
}

void save_adam(const std::filesystem::path& dir, const Adam& opt) {
    auto opt_dir = dir / "opt";
    std::filesystem::create_directories(opt_dir);
    std::ofstream meta(opt_dir / "adam.txt");
    meta << "step " << opt.step_count() << "\n";
    for (const auto& [name, slot] : opt.slots()) {
        Shape shape{static_cast<int>(slot.m.size())};
        vten_save(opt_dir / (name + ".m.vten"), shape,
                  std::span<const float>(slot.m.data(), slot.m.size()));
        vten_save(opt_dir / (name + ".v.vten"), shape,
                  std::span<const float>(slot.v.data(), slot.v.size()));
        meta << name << " " << slot.m.size() << "\n";
    }
}

void load_adam(const std::filesystem::path& dir, Adam& opt) {
    auto opt_dir = dir / "opt";
    std::ifstream meta(opt_dir / "adam.txt");
    if (!meta) throw IoError("cannot read optimizer state in " + dir.string());
    std::string key;
    std::int64_t step = 0;
    meta >> key >> step;
    if (key != "step") throw IoError("bad optimizer meta in " + dir.string());
    std::map<std::string, Adam::Slot> slots;
    std::string name;
    std::size_t n;
    while (meta >> name >> n) {
        Adam::Slot slot;
        auto [ms, mdata] = vten_load(opt_dir / (name + ".m.vten"));
        auto [vs, vdata] = vten_load(opt_dir / (name + ".v.vten"));
        if (mdata.size() != n || vdata.size() != n)
            throw IoError("optimizer moment size mismatch for '" + name + "'");
        slot.m = std::move(mdata);
        slot.v = std::move(vdata);
        slots[name] = std::move(slot);
    }
    opt.restore(std::move(slots), step);
}

void save_state(const std::filesystem::path& dir,
                const std::map<std::string, std::string>& kv) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "state.txt");
    if (!os) throw IoError("cannot write state in " + dir.string());
    for (const auto& [k, v] : kv) os << k << " " << v << "\n";
}

std::map<std::string, std::string> load_state(const std::filesystem::path& dir) {
    std::ifstream is(dir / "state.txt");
    if (!is) throw IoError("cannot read state in " + dir.string());
    std::map<std::string, std::string> out;
    std::string k, v;
    while (is >> k >> v) out[k] = v;
    return out;
}

void save_channel_stats(const std::filesystem::path& dir, const ChannelStats& stats) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "channel_stats.txt");
    if (!os) throw IoError("cannot write channel stats in " + dir.string());
    os << "channels " << stats.channels() << "\n";
    os.precision(17);
    for (int c = 0; c < stats.channels(); ++c)
        os << c << " " << stats.mean[static_cast<std::size_t>(c)] << " "
           << stats.stddev[static_cast<std::size_t>(c)] << "\n";
}

ChannelStats load_channel_stats(const std::filesystem::path& dir) {
    std::ifstream is(dir / "channel_stats.txt");
    if (!is) throw IoError("cannot read channel stats in " + dir.string());
    std::string word;
    int n = 0;
    is >> word >> n;
    ChannelStats stats;
    stats.mean.resize(static_cast<std::size_t>(n));
    stats.stddev.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        int idx;
        is >> idx >> stats.mean[static_cast<std::size_t>(c)] >>
            stats.stddev[static_cast<std::size_t>(c)];
    }
    return stats;
}

}  // namespace sora
