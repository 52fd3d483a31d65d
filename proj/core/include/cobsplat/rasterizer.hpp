#pragma once

#include <array>
#include <span>
#include <vector>

#include "cobsplat/scene.hpp"

namespace cobsplat {

// Rasterization constants shared with the reference splatting convention.
inline constexpr double kAlphaCutoff = 1.0 / 255.0; // below this a splat is skipped at a pixel
inline constexpr double kAlphaMax = 0.99;           // per-pixel alpha clamp
inline constexpr double kTransmittanceFloor = 1e-4; // pixel terminates below this
inline constexpr double kCovDilation = 0.3;         // px^2 added to the 2D covariance diagonal
inline constexpr int kTileSize = 16;
// Binning radius in standard deviations. Chosen so that every skipped pixel is
// guaranteed to satisfy alpha < kAlphaCutoff (exp(-3.5^2/2) < 1/255), which
// makes the tiled pass agree with a per-pixel full composite exactly.
inline constexpr double kFootprintRadiusSigma = 3.5;

struct Projected2D {
    Vec2 mean2d;      // pixel coordinates
    Mat2 cov2d;       // after EWA projection + dilation
    double depth;     // view-space z
    int source_index; // index into the cloud
};

// Everything the backward pass needs about one visible splat.
struct RenderSplat {
    int source_index;
    Vec3 p_cam;    // view-space position
    Vec2 mean2d;
    Mat2 cov2d;
    Mat2 conic;    // cov2d^{-1}
    double depth;
    double opacity;
    double mask_label;
    Vec3 rgb;                     // SH-evaluated view color, clamped at 0
    std::array<bool, 3> clamped;  // channel hit the zero clamp
    double radius_px;
};

// One composited contribution at one pixel. Within a pixel, records are depth
// ordered and T_{i+1} = T_i * (1 - alpha_i).
struct ContribRecord {
    int source_index;
    double alpha;                // in (0, kAlphaMax]
    double transmittance_before; // T_i at arrival, >= kTransmittanceFloor
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    bool want_backward = false;
    int threads = 1;
    bool deterministic = false; // force sequential tile order (thread-count independent)
};

struct FrameBuffer {
    int width = 0;
    int height = 0;
    int source_count = 0;                    // size of the rendered cloud
    std::vector<double> color;               // H*W*3, composited + background
    std::vector<double> mask;                // H*W, sum of m_i alpha_i T_i
    std::vector<double> final_transmittance; // H*W
    Vec3 background = Vec3::Zero();
    Camera camera;

    // Per-pixel ordered contribution records; populated when want_backward.
    bool has_records = false;
    std::vector<ContribRecord> records;
    std::vector<int> record_offsets; // H*W+1 prefix offsets into records
    std::vector<RenderSplat> splats; // projection cache for backward

    std::span<const ContribRecord> pixel_records(int pixel) const {
        return {records.data() + record_offsets[pixel],
                records.data() + record_offsets[pixel + 1]};
    }
    Image color_image() const;
};

// Projects the cloud into a camera. Splats behind the near plane, beyond the
// far plane, or entirely outside the frame are culled.
std::vector<Projected2D> project(const GaussianCloud& cloud, const Camera& camera);

// Front-to-back tiled compositing of color, mask label and transmittance.
FrameBuffer render(const GaussianCloud& cloud, const Camera& camera,
                   const RenderOptions& opts = {});

// Gradients of a scalar image loss with respect to every splat attribute.
// Rotation gradients are with respect to the stored (possibly unnormalized)
// quaternion, i.e. they include the normalization chain.
struct RgbGradients {
    int count = 0;
    int color_dim = 0;
    std::vector<double> position;      // 3N
    std::vector<double> log_scale;     // 3N
    std::vector<double> rotation;      // 4N
    std::vector<double> opacity_logit; // N
    std::vector<double> color;         // color_dim * N

    void resize(int n, int cdim);
};

// dL_dpixel is the H*W*3 gradient of the loss with respect to fb.color.
// Requires fb rendered with want_backward; cloud must be the rendered cloud.
RgbGradients backward_rgb(const GaussianCloud& cloud, const FrameBuffer& fb,
                          std::span<const double> dL_dpixel, const RenderOptions& opts = {});

// Per-splat mask-label gradient and signed supervision counts. Geometry is
// treated as constant: only dL/dm_i is produced, plus the number of covered
// pixels supervised toward foreground (pos) and background (neg).
struct MaskBackward {
    std::vector<double> d_mask_label; // dL/dm_i before the logit chain
    std::vector<int> pos_count;
    std::vector<int> neg_count;
};

MaskBackward backward_mask(const FrameBuffer& fb, const Mask& gt);

namespace detail {
// Projection with full backward context; public project() is a thin view.
std::vector<RenderSplat> project_detailed(const GaussianCloud& cloud, const Camera& camera);
// SH view color. `dir` is the unit direction from camera center to the splat.
Vec3 eval_sh(int degree, const Eigen::VectorXd& coeffs, const Vec3& dir,
             std::array<bool, 3>* clamped);
} // namespace detail

} // namespace cobsplat
