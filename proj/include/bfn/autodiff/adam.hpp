#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bfn/autodiff/params.hpp"
#include "bfn/error.hpp"

namespace bfn::ad {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment buffers for one parameter tensor.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update of `params` in place. `step` counts from 1.
inline void adam_update(std::span<double> params, std::span<const double> grads, AdamSlot& slot, std::size_t step,
                        const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw shape_error("adam: parameter and gradient sizes differ");
    if (step < 1) throw validation_error("adam: step count starts at 1");
    if (slot.m.size() != params.size()) {
        slot.m.assign(params.size(), 0.0);
        slot.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        slot.m[k] = cfg.beta1 * slot.m[k] + (1.0 - cfg.beta1) * g;
        slot.v[k] = cfg.beta2 * slot.v[k] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = slot.m[k] / c1;
        const double v_hat = slot.v[k] / c2;
        params[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

/// Adam over a whole ParamStore; slots are keyed by parameter position.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& store) {
        auto& entries = store.entries();
        if (slots_.size() != entries.size()) slots_.resize(entries.size());
        ++step_;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto& t = entries[i].tensor;
            adam_update(t.mutable_value(), t.grad(), slots_[i], step_, cfg_);
        }
    }

    std::size_t steps_taken() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<AdamSlot> slots_;
    std::size_t step_ = 0;
};

}  // namespace bfn::ad
