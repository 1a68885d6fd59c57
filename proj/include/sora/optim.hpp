#pragma once

#include <map>
#include <string>
#include <vector>

#include "sora/tensor.hpp"

namespace sora {

// Named references to trainable leaf tensors. Order of registration defines
// the (deterministic) update order.
class ParamSet {
  public:
    void add(std::string name, Tensor* t) { entries_.push_back({std::move(name), t}); }

    struct Entry {
        std::string name;
        Tensor* tensor;
    };

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    Tensor* find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.tensor;
        return nullptr;
    }

  private:
    std::vector<Entry> entries_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with double-precision update arithmetic over f32 parameters.
// Moments are keyed by parameter name so freezing or re-collecting a
// parameter set never mixes up state.
class Adam {
  public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // Applies one update using the gradients left by the latest backward().
    void step(const ParamSet& params);

    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    // Stage schedules adjust the rate mid-run without dropping moments.
    void set_lr(double lr) { cfg_.lr = lr; }

    // Checkpoint access: moments plus step counter.
    struct Slot {
        std::vector<float> m;
        std::vector<float> v;
    };
    const std::map<std::string, Slot>& slots() const { return slots_; }
    void restore(std::map<std::string, Slot> slots, std::int64_t step) {
        slots_ = std::move(slots);
        step_ = step;
    }

  private:
    AdamConfig cfg_;
    std::map<std::string, Slot> slots_;
    std::int64_t step_ = 0;
};

}  // namespace sora
