#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "nsm/errors.hpp"

namespace nsm::opt {

struct RmsPropConfig {
    double base_lr = 1e-4;
    double momentum = 0.9;   // heavy-ball coefficient
    double smoothing = 0.99; // decay of the squared-gradient accumulator
    double eps = 1e-8;
};

// Cosine annealing with warm restarts: period t0, doubling by t_mult at each
// restart; the learning rate returns to base_lr at every restart boundary.
struct CosineRestarts {
    int t0 = 1000;
    int t_mult = 2;
    double eta_min = 1e-6;
    // Optional linear ramp before the cosine schedule starts; keeps the first
    // RMSProp steps small while the squared-gradient accumulator warms up.
    int warmup = 0;

    double lr_at(long step, double base_lr) const {
        if (step < warmup) {
            return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
        }
        long t = step - warmup;
        long period = t0;
        while (t >= period) {
            t -= period;
            period *= t_mult;
        }
        const double cosv = std::cos(M_PI * static_cast<double>(t) / static_cast<double>(period));
        return eta_min + (base_lr - eta_min) * 0.5 * (1.0 + cosv);
    }
};

// RMSProp with heavy-ball momentum.
class RmsProp {
public:
    RmsProp(std::size_t n, RmsPropConfig cfg) : cfg_(cfg), acc_(n, 0.0), mom_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        if (params.size() != acc_.size() || grad.size() != acc_.size()) {
            throw ConfigError("rmsprop_step: size mismatch");
        }
        for (std::size_t i = 0; i < acc_.size(); ++i) {
            const double g = grad[i];
            acc_[i] = cfg_.smoothing * acc_[i] + (1.0 - cfg_.smoothing) * g * g;
            mom_[i] = cfg_.momentum * mom_[i] + lr * g / (std::sqrt(acc_[i]) + cfg_.eps);
            params[i] -= mom_[i];
        }
    }

    std::span<const double> accumulator() const { return acc_; }

private:
    RmsPropConfig cfg_;
    std::vector<double> acc_;
    std::vector<double> mom_;
};

} // namespace nsm::opt
