#include "cobsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "rasterizer_internal.hpp"

namespace cobsplat {

namespace {

constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                            0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

} // namespace

namespace detail {

Vec3 eval_sh(int degree, const Eigen::VectorXd& coeffs, const Vec3& dir,
             std::array<bool, 3>* clamped) {
    const auto c = [&](int k, int ch) { return coeffs[k * 3 + ch]; };
    Vec3 rgb;
    for (int ch = 0; ch < 3; ++ch) rgb[ch] = 0.5 + kSH0 * c(0, ch);
    if (degree >= 1) {
        const double x = dir.x(), y = dir.y(), z = dir.z();
        for (int ch = 0; ch < 3; ++ch)
            rgb[ch] += -kSH1 * y * c(1, ch) + kSH1 * z * c(2, ch) - kSH1 * x * c(3, ch);
        if (degree >= 2) {
            const double xx = x * x, yy = y * y, zz = z * z;
            const double b[5] = {kSH2[0] * x * y, kSH2[1] * y * z, kSH2[2] * (2 * zz - xx - yy),
                                 kSH2[3] * x * z, kSH2[4] * (xx - yy)};
            for (int ch = 0; ch < 3; ++ch)
                for (int k = 0; k < 5; ++k) rgb[ch] += b[k] * c(4 + k, ch);
            if (degree >= 3) {
                const double b3[7] = {kSH3[0] * y * (3 * xx - yy),
                                      kSH3[1] * x * y * z,
                                      kSH3[2] * y * (4 * zz - xx - yy),
                                      kSH3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                                      kSH3[4] * x * (4 * zz - xx - yy),
                                      kSH3[5] * z * (xx - yy),
                                      kSH3[6] * x * (xx - yy)};
                for (int ch = 0; ch < 3; ++ch)
                    for (int k = 0; k < 7; ++k) rgb[ch] += b3[k] * c(9 + k, ch);
            }
        }
    }
    for (int ch = 0; ch < 3; ++ch) {
        const bool clamp = rgb[ch] < 0.0;
        if (clamped) (*clamped)[ch] = clamp;
        if (clamp) rgb[ch] = 0.0;
    }
    return rgb;
}

std::vector<RenderSplat> project_detailed(const GaussianCloud& cloud, const Camera& camera) {
    std::vector<RenderSplat> out;
    out.reserve(cloud.size());

    const Mat3 w2c = camera.rotation();
    const Vec3 cam_center = camera.center();
    const double min_x = 0.5, max_x = camera.width - 0.5;
    const double min_y = 0.5, max_y = camera.height - 0.5;

    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        const Vec3 p_cam = w2c * g.position + camera.translation;
        const double z = p_cam.z();
        if (!(z > camera.near) || !(z < camera.far)) continue;

        const Vec2 mean(camera.fx * p_cam.x() / z + camera.cx,
                        camera.fy * p_cam.y() / z + camera.cy);

        const Vec3 s = g.scale();
        const Mat3 rot = quat_to_rotmat(normalized_quat(g.rotation));
        const Mat3 m = rot * s.asDiagonal();
        const Mat3 sigma3 = m * m.transpose();

        const auto ratios = detail::clamped_view_ratios(p_cam, camera);
        const Eigen::Matrix<double, 2, 3> a = detail::ewa_jacobian(p_cam, camera, ratios) * w2c;
        Mat2 cov = a * sigma3 * a.transpose();
        cov(0, 0) += kCovDilation;
        cov(1, 1) += kCovDilation;

        const double det = cov.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) continue;

        // Largest eigenvalue of the 2x2 covariance bounds the footprint.
        const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
        const double disc = std::sqrt(std::max(0.0, mid * mid - det));
        const double radius = kFootprintRadiusSigma * std::sqrt(mid + disc);

        if (mean.x() + radius < min_x || mean.x() - radius > max_x ||
            mean.y() + radius < min_y || mean.y() - radius > max_y)
            continue;

        RenderSplat sp;
        sp.source_index = static_cast<int>(i);
        sp.p_cam = p_cam;
        sp.mean2d = mean;
        sp.cov2d = cov;
        sp.conic = cov.inverse();
        sp.depth = z;
        sp.opacity = g.opacity();
        sp.mask_label = g.mask_label();
        Vec3 dir = Vec3::Zero();
        if (cloud.sh_degree > 0) dir = (g.position - cam_center).normalized();
        sp.rgb = eval_sh(cloud.sh_degree, g.color, dir, &sp.clamped);
        sp.radius_px = radius;
        out.push_back(sp);
    }
    return out;
}

} // namespace detail

std::vector<Projected2D> project(const GaussianCloud& cloud, const Camera& camera) {
    const auto splats = detail::project_detailed(cloud, camera);
    std::vector<Projected2D> out;
    out.reserve(splats.size());
    for (const auto& sp : splats)
        out.push_back({sp.mean2d, sp.cov2d, sp.depth, sp.source_index});
    return out;
}

Image FrameBuffer::color_image() const {
    Image img(width, height, 3);
    img.data = color;
    return img;
}

void RgbGradients::resize(int n, int cdim) {
    count = n;
    color_dim = cdim;
    position.assign(3 * static_cast<size_t>(n), 0.0);
    log_scale.assign(3 * static_cast<size_t>(n), 0.0);
    rotation.assign(4 * static_cast<size_t>(n), 0.0);
    opacity_logit.assign(n, 0.0);
    color.assign(static_cast<size_t>(cdim) * n, 0.0);
}

FrameBuffer render(const GaussianCloud& cloud, const Camera& camera, const RenderOptions& opts) {
    camera.validate();

    FrameBuffer fb;
    fb.width = camera.width;
    fb.height = camera.height;
    fb.source_count = static_cast<int>(cloud.size());
    fb.background = opts.background;
    fb.camera = camera;
    const size_t pixels = static_cast<size_t>(fb.width) * fb.height;
    fb.color.assign(pixels * 3, 0.0);
    fb.mask.assign(pixels, 0.0);
    fb.final_transmittance.assign(pixels, 1.0);
    fb.has_records = opts.want_backward;

    fb.splats = detail::project_detailed(cloud, camera);

    const int tiles_x = (fb.width + kTileSize - 1) / kTileSize;
    const int tiles_y = (fb.height + kTileSize - 1) / kTileSize;
    const int tile_count = tiles_x * tiles_y;

    // Bin splats into the tiles their footprint square overlaps.
    std::vector<std::vector<int>> bins(tile_count);
    for (size_t si = 0; si < fb.splats.size(); ++si) {
        const RenderSplat& sp = fb.splats[si];
        // Pixel (r, c) samples at (c + 0.5, r + 0.5).
        int c0 = static_cast<int>(std::floor(sp.mean2d.x() - sp.radius_px - 0.5));
        int c1 = static_cast<int>(std::ceil(sp.mean2d.x() + sp.radius_px - 0.5));
        int r0 = static_cast<int>(std::floor(sp.mean2d.y() - sp.radius_px - 0.5));
        int r1 = static_cast<int>(std::ceil(sp.mean2d.y() + sp.radius_px - 0.5));
        c0 = std::max(0, c0);
        r0 = std::max(0, r0);
        c1 = std::min(fb.width - 1, c1);
        r1 = std::min(fb.height - 1, r1);
        for (int ty = r0 / kTileSize; ty <= r1 / kTileSize; ++ty)
            for (int tx = c0 / kTileSize; tx <= c1 / kTileSize; ++tx)
                bins[ty * tiles_x + tx].push_back(static_cast<int>(si));
    }
    for (auto& bin : bins) {
        std::sort(bin.begin(), bin.end(), [&](int a, int b) {
            if (fb.splats[a].depth != fb.splats[b].depth)
                return fb.splats[a].depth < fb.splats[b].depth;
            return fb.splats[a].source_index < fb.splats[b].source_index;
        });
    }

    // Per-tile record staging so the stitched global layout is tile-order
    // deterministic.
    std::vector<std::vector<ContribRecord>> tile_records(opts.want_backward ? tile_count : 0);
    std::vector<std::vector<int>> tile_pixel_counts(opts.want_backward ? tile_count : 0);

    detail::parallel_chunks(tile_count, opts.threads, opts.deterministic, [&](int tile, int) {
        const int tx = tile % tiles_x, ty = tile / tiles_x;
        const int c_begin = tx * kTileSize, c_end = std::min(fb.width, c_begin + kTileSize);
        const int r_begin = ty * kTileSize, r_end = std::min(fb.height, r_begin + kTileSize);
        const auto& bin = bins[tile];

        std::vector<ContribRecord>* recs = nullptr;
        std::vector<int>* counts = nullptr;
        if (opts.want_backward) {
            recs = &tile_records[tile];
            counts = &tile_pixel_counts[tile];
            counts->assign(static_cast<size_t>(c_end - c_begin) * (r_end - r_begin), 0);
        }

        for (int r = r_begin; r < r_end; ++r) {
            for (int c = c_begin; c < c_end; ++c) {
                const double sx = c + 0.5, sy = r + 0.5;
                double t = 1.0;
                Vec3 acc = Vec3::Zero();
                double mask_acc = 0.0;
                int n_records = 0;

                for (const int si : bin) {
                    if (t < kTransmittanceFloor) break;
                    const RenderSplat& sp = fb.splats[si];
                    const double dx = sx - sp.mean2d.x();
                    const double dy = sy - sp.mean2d.y();
                    const double power =
                        -0.5 * (sp.conic(0, 0) * dx * dx + sp.conic(1, 1) * dy * dy) -
                        sp.conic(0, 1) * dx * dy;
                    if (power > 0.0) continue;
                    const double alpha = std::min(kAlphaMax, sp.opacity * std::exp(power));
                    if (alpha < kAlphaCutoff) continue;

                    acc += sp.rgb * (alpha * t);
                    mask_acc += sp.mask_label * alpha * t;
                    if (opts.want_backward) {
                        recs->push_back({sp.source_index, alpha, t});
                        ++n_records;
                    }
                    t *= 1.0 - alpha;
                }

                const size_t px = static_cast<size_t>(r) * fb.width + c;
                for (int ch = 0; ch < 3; ++ch)
                    fb.color[px * 3 + ch] = acc[ch] + opts.background[ch] * t;
                fb.mask[px] = mask_acc;
                fb.final_transmittance[px] = t;
                if (opts.want_backward)
                    (*counts)[static_cast<size_t>(r - r_begin) * (c_end - c_begin) +
                              (c - c_begin)] = n_records;
            }
        }
    });

    if (opts.want_backward) {
        fb.record_offsets.assign(pixels + 1, 0);
        for (int tile = 0; tile < tile_count; ++tile) {
            const int tx = tile % tiles_x, ty = tile / tiles_x;
            const int c_begin = tx * kTileSize, c_end = std::min(fb.width, c_begin + kTileSize);
            const int r_begin = ty * kTileSize, r_end = std::min(fb.height, r_begin + kTileSize);
            size_t k = 0;
            for (int r = r_begin; r < r_end; ++r)
                for (int c = c_begin; c < c_end; ++c)
                    fb.record_offsets[static_cast<size_t>(r) * fb.width + c + 1] =
                        tile_pixel_counts[tile][k++];
        }
        for (size_t p = 0; p < pixels; ++p) fb.record_offsets[p + 1] += fb.record_offsets[p];
        fb.records.resize(fb.record_offsets[pixels]);
        for (int tile = 0; tile < tile_count; ++tile) {
            const int tx = tile % tiles_x, ty = tile / tiles_x;
            const int c_begin = tx * kTileSize, c_end = std::min(fb.width, c_begin + kTileSize);
            const int r_begin = ty * kTileSize, r_end = std::min(fb.height, r_begin + kTileSize);
            size_t k = 0, src = 0;
            for (int r = r_begin; r < r_end; ++r) {
                for (int c = c_begin; c < c_end; ++c) {
                    const size_t px = static_cast<size_t>(r) * fb.width + c;
                    const int n = tile_pixel_counts[tile][k++];
                    std::copy_n(tile_records[tile].begin() + src, n,
                                fb.records.begin() + fb.record_offsets[px]);
                    src += n;
                }
            }
        }
    }

    return fb;
}

MaskBackward backward_mask(const FrameBuffer& fb, const Mask& gt) {
    if (!fb.has_records)
        throw ContractViolation("backward_mask requires a frame buffer rendered with backward");
    if (gt.width != fb.width || gt.height != fb.height)
        throw ValidationError("backward_mask: mask " + std::to_string(gt.width) + "x" +
                              std::to_string(gt.height) + " vs frame " +
                              std::to_string(fb.width) + "x" + std::to_string(fb.height));

    MaskBackward mb;
    mb.d_mask_label.assign(fb.source_count, 0.0);
    mb.pos_count.assign(fb.source_count, 0);
    mb.neg_count.assign(fb.source_count, 0);

    const size_t pixels = static_cast<size_t>(fb.width) * fb.height;
    for (size_t px = 0; px < pixels; ++px) {
        const bool fg = gt.data[px] != 0;
        for (const ContribRecord& rec : fb.pixel_records(static_cast<int>(px))) {
            const double w = rec.alpha * rec.transmittance_before;
            if (fg) {
                mb.d_mask_label[rec.source_index] -= w;
                ++mb.pos_count[rec.source_index];
            } else {
                mb.d_mask_label[rec.source_index] += w;
                ++mb.neg_count[rec.source_index];
            }
        }
    }
    return mb;
}

} // namespace cobsplat
