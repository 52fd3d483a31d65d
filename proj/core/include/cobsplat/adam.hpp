#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cobsplat/error.hpp"

namespace cobsplat {

// Plain Adam with bias correction. One state per parameter group; steps are
// element-wise over flat parameter/gradient spans.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    size_t size() const { return m_.size(); }

    void step(std::span<double> params, std::span<const double> grads, double lr,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-15) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ContractViolation("AdamState::step: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t i = 0; i < m_.size(); ++i) {
            const double g = grads[i];
            m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
            v_[i] = beta2 * v_[i] + (1.0 - beta2) * g * g;
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }

private:
    std::vector<double> m_, v_;
    long t_ = 0;
};

} // namespace cobsplat
