#include "okapi/optim.hpp"

#include <cmath>

#include "okapi/errors.hpp"

namespace okapi {

void AdamW::update(const std::string& name, std::vector<double>& param,
                   const std::vector<double>& grad, double lr) {
    if (t_ == 0) throw TrainError("AdamW: update() before begin_step()");
    if (param.size() != grad.size())
        throw ShapeError("AdamW: param/grad size mismatch for '" + name + "'");

    auto& [m, v] = state_[name];
    if (m.empty()) {
        m.assign(param.size(), 0.0);
        v.assign(param.size(), 0.0);
    } else if (m.size() != param.size()) {
        throw ShapeError("AdamW: state size changed for '" + name + "'");
    }

    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * param[i]);
    }
}

} // namespace okapi
