#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace okapi {

// Adam with decoupled weight decay. Moment state is keyed by parameter name;
// the bias-correction timestep is shared, so call begin_step() once per
// optimizer step and then update() for each parameter. The decay term is
// lr * weight_decay * p, so lr == 0 leaves parameters untouched no matter
// what the decay is.
class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void begin_step() { ++t_; }

    void update(const std::string& name, std::vector<double>& param,
                const std::vector<double>& grad, double lr);

    long step_count() const { return t_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

} // namespace okapi
