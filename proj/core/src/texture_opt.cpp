#include "cobsplat/texture_opt.hpp"

#include <cmath>

namespace cobsplat {

TextureOptState::TextureOptState(size_t count, int color_dim, int phase_budget,
                                 TextureLearningRates rates)
    : count_(count), color_dim_(color_dim), phase_budget_(std::max(1, phase_budget)),
      rates_(rates), position_(3 * count), log_scale_(3 * count), rotation_(4 * count),
      opacity_(count), color_(static_cast<size_t>(color_dim) * count) {}

void TextureOptState::step(GaussianCloud& cloud, const RgbGradients& grads,
                           bool update_geometry) {
    if (cloud.size() != count_ || grads.count != static_cast<int>(count_) ||
        grads.color_dim != color_dim_)
        throw ContractViolation("TextureOptState::step: state does not match cloud");

    // Log-lerp decay of the position rate over the phase budget.
    const double tau =
        std::min(1.0, static_cast<double>(steps_taken_) / static_cast<double>(phase_budget_));
    const double pos_lr = std::exp((1.0 - tau) * std::log(rates_.position_init) +
                                   tau * std::log(rates_.position_final));
    ++steps_taken_;

    std::vector<double> flat(4 * count_);

    auto gather = [&](auto getter, int dim) {
        for (size_t i = 0; i < count_; ++i)
            for (int k = 0; k < dim; ++k) flat[i * dim + k] = getter(cloud.gaussians[i], k);
    };
    auto scatter = [&](auto setter, int dim) {
        for (size_t i = 0; i < count_; ++i)
            for (int k = 0; k < dim; ++k) setter(cloud.gaussians[i], k, flat[i * dim + k]);
    };

    if (update_geometry) {
        gather([](const Gaussian& g, int k) { return g.position[k]; }, 3);
        position_.step({flat.data(), 3 * count_}, grads.position, pos_lr);
        scatter([](Gaussian& g, int k, double v) { g.position[k] = v; }, 3);

        gather([](const Gaussian& g, int k) { return g.log_scale[k]; }, 3);
        log_scale_.step({flat.data(), 3 * count_}, grads.log_scale, rates_.scale);
        scatter([](Gaussian& g, int k, double v) { g.log_scale[k] = v; }, 3);

        gather([](const Gaussian& g, int k) { return g.rotation[k]; }, 4);
        rotation_.step({flat.data(), 4 * count_}, grads.rotation, rates_.rotation);
        scatter([](Gaussian& g, int k, double v) { g.rotation[k] = v; }, 4);
        for (Gaussian& g : cloud.gaussians) g.rotation = normalized_quat(g.rotation);

        gather([](const Gaussian& g, int k) { (void)k; return g.opacity_logit; }, 1);
        opacity_.step({flat.data(), count_}, grads.opacity_logit, rates_.opacity);
        scatter([](Gaussian& g, int k, double v) { (void)k; g.opacity_logit = v; }, 1);
    }

    std::vector<double> colors(static_cast<size_t>(color_dim_) * count_);
    for (size_t i = 0; i < count_; ++i)
        for (int k = 0; k < color_dim_; ++k)
            colors[i * color_dim_ + k] = cloud.gaussians[i].color[k];
    color_.step(colors, grads.color, rates_.color);
    for (size_t i = 0; i < count_; ++i)
        for (int k = 0; k < color_dim_; ++k)
            cloud.gaussians[i].color[k] = colors[i * color_dim_ + k];
}

} // namespace cobsplat
