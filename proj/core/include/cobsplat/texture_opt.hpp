#pragma once

#include "cobsplat/adam.hpp"
#include "cobsplat/rasterizer.hpp"

namespace cobsplat {

// Per-group learning rates, inherited from the reference splat trainer. The
// position rate decays exponentially from init to final over a phase.
struct TextureLearningRates {
    double position_init = 1.6e-4;
    double position_final = 1.6e-6;
    double color = 2.5e-3;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

// Adam state for one texture phase. Buffers track the cloud the state was
// built for; splitting invalidates the state, so each phase starts fresh.
class TextureOptState {
public:
    TextureOptState(size_t count, int color_dim, int phase_budget,
                    TextureLearningRates rates = {});

    size_t count() const { return count_; }

    // One Adam step per attribute group. When update_geometry is false only
    // the color coefficients move, so alpha (and thus any rendered mask) is
    // bit-identical afterwards. mask_logit and obj_id are never touched.
    void step(GaussianCloud& cloud, const RgbGradients& grads, bool update_geometry = true);

private:
    size_t count_;
    int color_dim_;
    int phase_budget_;
    int steps_taken_ = 0;
    TextureLearningRates rates_;
    AdamState position_, log_scale_, rotation_, opacity_, color_;
};

inline void step_texture(GaussianCloud& cloud, const RgbGradients& grads,
                         TextureOptState& state, bool update_geometry = true) {
    state.step(cloud, grads, update_geometry);
}

} // namespace cobsplat
