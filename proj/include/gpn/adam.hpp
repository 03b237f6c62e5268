// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias correction. One state slot per registered parameter.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gpn/common.hpp"
#include "gpn/tensor.hpp"

namespace gpn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        require(cfg_.beta1 > 0.0 && cfg_.beta1 < 1.0, "adam", "beta1 must be in (0,1)");
        require(cfg_.beta2 > 0.0 && cfg_.beta2 < 1.0, "adam", "beta2 must be in (0,1)");
        require(cfg_.learning_rate > 0.0, "adam", "learning rate must be positive");
        first_.resize(params_.size());
        second_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            first_[i].assign(params_[i]->value.size(), 0.0);
            second_[i].assign(params_[i]->value.size(), 0.0);
        }
    }

    void zero_grads() {
        for (Parameter* p : params_) p->zero_grad();
    }

    void step() {
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            require(p.grad.size() == p.value.size(), "adam",
                    "gradient shape mismatch for " + p.name);
            Vec& m = first_[i];
            Vec& v = second_[i];
            for (size_t j = 0; j < p.value.size(); ++j) {
                double g = p.grad[j];
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                p.value[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Vec> first_;
    std::vector<Vec> second_;
};

}  // namespace gpn
