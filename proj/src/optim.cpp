#include "sora/optim.hpp"

#include <cmath>

namespace sora {

void Adam::step(const ParamSet& params) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (const auto& e : params.entries()) {
        Tensor& t = *e.tensor;
        std::vector<float> g = t.grad();
        Slot& slot = slots_[e.name];
        if (slot.m.size() != t.numel()) {
            slot.m.assign(t.numel(), 0.0f);
            slot.v.assign(t.numel(), 0.0f);
        }
        std::vector<float> next(t.numel());
        auto value = t.data();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            double gi = g[i];
            double m = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * gi;
            double v = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            slot.m[i] = static_cast<float>(m);
            slot.v[i] = static_cast<float>(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            next[i] = static_cast<float>(value[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        t = Tensor::from_data(t.shape(), std::move(next), /*requires_grad=*/true);
    }
}

}  // namespace sora
