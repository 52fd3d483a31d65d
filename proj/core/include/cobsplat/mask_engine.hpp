#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cobsplat/adam.hpp"
#include "cobsplat/rasterizer.hpp"

namespace cobsplat {

inline constexpr double kMaskSigEps = 1e-6;
inline constexpr double kSplitScaleDivisor = 1.6;

// Per-splat supervision statistics accumulated over the views of one
// mask-optimization phase. Indices are only valid for the cloud the phase ran
// on; splitting invalidates them.
struct MaskStats {
    std::vector<double> sig_sum;
    std::vector<int> observed_views;
    // Median projected footprint in pixels across training views; +inf for
    // splats never in front of a camera.
    std::vector<double> footprint_px;

    void reset(size_t n) {
        sig_sum.assign(n, 0.0);
        observed_views.assign(n, 0);
        footprint_px.assign(n, std::numeric_limits<double>::infinity());
    }
    size_t size() const { return sig_sum.size(); }
    // Unobserved splats default to 1 (never flagged as boundary).
    double mean_sig(size_t i) const {
        return observed_views[i] > 0 ? sig_sum[i] / observed_views[i] : 1.0;
    }
};

struct BoundarySet {
    std::vector<int> indices;
    double selected_threshold = 0.0;
};

// Signed-supervision loss over a rendered mask plane: sum over pixels of
// -M * M_render + (1 - M) * M_render. Its per-label derivative is exactly the
// per-pixel +-alpha*T sum produced by backward_mask.
double mask_loss(std::span<const double> rendered, const Mask& gt);

// One-sidedness of supervision: |pos - neg| / (pos + neg + eps), in [0, 1].
double mask_sig(int pos, int neg, double eps = kMaskSigEps);

// Folds one view's counts into the running statistics. Splats with zero
// covered pixels are untouched.
void accumulate_view(MaskStats& stats, const MaskBackward& mb, double eps = kMaskSigEps);

// Splats whose observed-view mean of mask_sig falls below delta.
BoundarySet select_boundary(const MaskStats& stats, double delta);

// Median over cameras of 3 * max(stddev) * fx / depth, in pixels.
std::vector<double> projected_footprints_px(const GaussianCloud& cloud,
                                            std::span<const Camera> cameras);

struct SplitRecord {
    int parent_index;
    int child_a;
    int child_b;
    double mean_sig;
    int observed_views;
};

struct SplitReport {
    std::vector<SplitRecord> entries;
    int excluded_small = 0;
    std::string to_json() const;
};

struct SplitResult {
    GaussianCloud cloud;
    SplitReport report;
};

// Replaces each boundary splat of at least min_footprint_px pixels with two
// children at scale/1.6, positions drawn from the parent density; all other
// attributes are inherited. Non-members are copied bit-exact (indices shift:
// survivors keep their relative order, children are appended).
SplitResult split_boundary(const GaussianCloud& cloud, const BoundarySet& bset,
                           std::span<const double> footprints_px, double min_footprint_px,
                           uint64_t seed, const MaskStats* stats = nullptr);

// dL/dlogit = dL/dm * m * (1 - m).
std::vector<double> chain_mask_grads(const GaussianCloud& cloud,
                                     std::span<const double> d_mask_label);

// One Adam step on the mask logits only (lr 0.1 by default in configs).
void step_mask_logits(GaussianCloud& cloud, std::span<const double> d_mask_logit,
                      AdamState& state, double lr);

} // namespace cobsplat
