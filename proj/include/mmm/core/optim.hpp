#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmm/core/tensor.hpp"

namespace mmm::core {

enum class OptKind { sgd, adam };

inline const char* opt_kind_name(OptKind k) { return k == OptKind::sgd ? "sgd" : "adam"; }

inline OptKind opt_kind_from(const std::string& s) {
    if (s == "sgd") return OptKind::sgd;
    if (s == "adam") return OptKind::adam;
    throw ValidationError("optimizer: unknown kind '" + s + "' (expected sgd or adam)");
}

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 2e-5; // constant schedule
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moment estimates for one parameter.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::map<std::string, AdamSlot> slots; // adam only, keyed by parameter name
};

// In-place update of every parameter in the update set. Each one must carry a
// gradient; a parameter without one was not part of the loss graph, which is
// a caller bug (the data-parallel placeholder machinery exists to prevent it).
inline void optimizer_step(const std::vector<Tensor>& params, const OptimizerConfig& cfg,
                           OptimizerState& state) {
    for (const Tensor& p : params)
        if (!p.has_grad())
            throw ContractError("optimizer_step: missing gradient for parameter '" +
                                (p.name().empty() ? std::string("<unnamed>") : p.name()) + "'");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (const Tensor& p : params) {
        std::vector<double>& w = p.impl()->data;
        const std::vector<double>& dw = p.impl()->grad;
        switch (cfg.kind) {
        case OptKind::sgd:
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * dw[i];
            break;
        case OptKind::adam: {
            AdamSlot& slot = state.slots[p.name()];
            if (slot.m.empty()) {
                slot.m.assign(w.size(), 0.0);
                slot.v.assign(w.size(), 0.0);
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * dw[i];
                slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * dw[i] * dw[i];
                const double mhat = slot.m[i] / bc1;
                const double vhat = slot.v[i] / bc2;
                w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
            break;
        }
        }
    }
}

} // namespace mmm::core
