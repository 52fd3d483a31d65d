#include <algorithm>
#include <cmath>

#include "cobsplat/rasterizer.hpp"
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

// Per-splat accumulators produced by the pixel sweep: d_mean (2), symmetric
// d_conic (3), d_opacity (1), d_rgb (3).
constexpr int kAccStride = 9;

// Unchains the SH color gradient: fills coefficient gradients and returns the
// view-direction gradient (zero at degree 0).
Vec3 sh_backward(int degree, const Eigen::VectorXd& coeffs, const Vec3& dir,
                 const std::array<bool, 3>& clamped, const Vec3& d_rgb,
                 std::span<double> d_coeffs) {
    Vec3 d_dir = Vec3::Zero();
    const double x = dir.x(), y = dir.y(), z = dir.z();
    for (int ch = 0; ch < 3; ++ch) {
        if (clamped[ch]) continue;
        const double up = d_rgb[ch];
        if (up == 0.0) continue;
        d_coeffs[0 * 3 + ch] += kSH0 * up;
        if (degree < 1) continue;

        d_coeffs[1 * 3 + ch] += -kSH1 * y * up;
        d_coeffs[2 * 3 + ch] += kSH1 * z * up;
        d_coeffs[3 * 3 + ch] += -kSH1 * x * up;
        d_dir.x() += -kSH1 * coeffs[3 * 3 + ch] * up;
        d_dir.y() += -kSH1 * coeffs[1 * 3 + ch] * up;
        d_dir.z() += kSH1 * coeffs[2 * 3 + ch] * up;
        if (degree < 2) continue;

        const double xx = x * x, yy = y * y, zz = z * z;
        const double b2[5] = {kSH2[0] * x * y, kSH2[1] * y * z, kSH2[2] * (2 * zz - xx - yy),
                              kSH2[3] * x * z, kSH2[4] * (xx - yy)};
        const Vec3 db2[5] = {Vec3(kSH2[0] * y, kSH2[0] * x, 0.0),
                             Vec3(0.0, kSH2[1] * z, kSH2[1] * y),
                             Vec3(-2 * kSH2[2] * x, -2 * kSH2[2] * y, 4 * kSH2[2] * z),
                             Vec3(kSH2[3] * z, 0.0, kSH2[3] * x),
                             Vec3(2 * kSH2[4] * x, -2 * kSH2[4] * y, 0.0)};
        for (int k = 0; k < 5; ++k) {
            d_coeffs[(4 + k) * 3 + ch] += b2[k] * up;
            d_dir += db2[k] * (coeffs[(4 + k) * 3 + ch] * up);
        }
        if (degree < 3) continue;

        const double b3[7] = {kSH3[0] * y * (3 * xx - yy),
                              kSH3[1] * x * y * z,
                              kSH3[2] * y * (4 * zz - xx - yy),
                              kSH3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                              kSH3[4] * x * (4 * zz - xx - yy),
                              kSH3[5] * z * (xx - yy),
                              kSH3[6] * x * (xx - yy)};
        const Vec3 db3[7] = {
            Vec3(kSH3[0] * 6 * x * y, kSH3[0] * (3 * xx - 3 * yy), 0.0),
            Vec3(kSH3[1] * y * z, kSH3[1] * x * z, kSH3[1] * x * y),
            Vec3(-2 * kSH3[2] * x * y, kSH3[2] * (4 * zz - xx - 3 * yy), kSH3[2] * 8 * y * z),
            Vec3(-6 * kSH3[3] * x * z, -6 * kSH3[3] * y * z, kSH3[3] * (6 * zz - 3 * xx - 3 * yy)),
            Vec3(kSH3[4] * (4 * zz - 3 * xx - yy), -2 * kSH3[4] * x * y, kSH3[4] * 8 * x * z),
            Vec3(2 * kSH3[5] * x * z, -2 * kSH3[5] * y * z, kSH3[5] * (xx - yy)),
            Vec3(kSH3[6] * (3 * xx - yy), -2 * kSH3[6] * x * y, 0.0)};
        for (int k = 0; k < 7; ++k) {
            d_coeffs[(9 + k) * 3 + ch] += b3[k] * up;
            d_dir += db3[k] * (coeffs[(9 + k) * 3 + ch] * up);
        }
    }
    return d_dir;
}

} // namespace

RgbGradients backward_rgb(const GaussianCloud& cloud, const FrameBuffer& fb,
                          std::span<const double> dL_dpixel, const RenderOptions& opts) {
    if (!fb.has_records)
        throw ContractViolation("backward_rgb requires a frame buffer rendered with backward");
    if (static_cast<int>(cloud.size()) != fb.source_count)
        throw ContractViolation("backward_rgb: cloud size does not match the rendered cloud");
    const size_t pixels = static_cast<size_t>(fb.width) * fb.height;
    if (dL_dpixel.size() != pixels * 3)
        throw ValidationError("backward_rgb: dL_dpixel has wrong size");

    RgbGradients grads;
    grads.resize(fb.source_count, cloud.color_dim());
    const size_t n_splats = fb.splats.size();
    if (n_splats == 0) return grads;

    std::vector<int> splat_of_source(fb.source_count, -1);
    for (size_t si = 0; si < n_splats; ++si)
        splat_of_source[fb.splats[si].source_index] = static_cast<int>(si);

    // Pixel sweep: per-row chunks into per-slot accumulators, reduced in slot
    // order so results depend only on the slot count.
    const int chunk_rows = kTileSize;
    const int chunk_count = (fb.height + chunk_rows - 1) / chunk_rows;
    const int slots = detail::slot_count(chunk_count, opts.threads, opts.deterministic);
    std::vector<std::vector<double>> acc_slots(
        slots, std::vector<double>(n_splats * kAccStride, 0.0));

    detail::parallel_chunks(chunk_count, opts.threads, opts.deterministic, [&](int chunk,
                                                                               int slot) {
        double* acc = acc_slots[slot].data();
        const int r_begin = chunk * chunk_rows;
        const int r_end = std::min(fb.height, r_begin + chunk_rows);
        for (int r = r_begin; r < r_end; ++r) {
            for (int c = 0; c < fb.width; ++c) {
                const size_t px = static_cast<size_t>(r) * fb.width + c;
                const auto recs = fb.pixel_records(static_cast<int>(px));
                if (recs.empty()) continue;
                const double* dl = dL_dpixel.data() + px * 3;
                const double t_final = fb.final_transmittance[px];
                const double sx = c + 0.5, sy = r + 0.5;

                Vec3 suffix = Vec3::Zero();
                for (size_t k = recs.size(); k-- > 0;) {
                    const ContribRecord& rec = recs[k];
                    const int si = splat_of_source[rec.source_index];
                    const RenderSplat& sp = fb.splats[si];
                    const double alpha = rec.alpha;
                    const double t = rec.transmittance_before;
                    double* a = acc + static_cast<size_t>(si) * kAccStride;

                    double d_alpha = 0.0;
                    for (int ch = 0; ch < 3; ++ch) {
                        a[6 + ch] += dl[ch] * alpha * t; // d rgb
                        d_alpha += dl[ch] * (sp.rgb[ch] * t -
                                             (suffix[ch] + fb.background[ch] * t_final) /
                                                 (1.0 - alpha));
                    }

                    // The alpha clamp has zero slope; geometry and opacity
                    // receive no gradient from clamped contributions.
                    if (alpha < kAlphaMax) {
                        const double dx = sx - sp.mean2d.x();
                        const double dy = sy - sp.mean2d.y();
                        const double d_power = d_alpha * alpha;
                        const double vx = sp.conic(0, 0) * dx + sp.conic(0, 1) * dy;
                        const double vy = sp.conic(0, 1) * dx + sp.conic(1, 1) * dy;
                        a[0] += d_power * vx;                  // d mean2d.x
                        a[1] += d_power * vy;                  // d mean2d.y
                        a[2] += -0.5 * d_power * dx * dx;      // d conic(0,0)
                        a[3] += -0.5 * d_power * dx * dy;      // d conic(0,1) (full-matrix)
                        a[4] += -0.5 * d_power * dy * dy;      // d conic(1,1)
                        a[5] += d_alpha * (alpha / sp.opacity); // d opacity
                    }

                    suffix += sp.rgb * (alpha * t);
                }
            }
        }
    });

    for (int s = 1; s < slots; ++s)
        for (size_t k = 0; k < acc_slots[0].size(); ++k) acc_slots[0][k] += acc_slots[s][k];
    const std::vector<double>& acc = acc_slots[0];

    // Unchain per splat into the 3D parameters.
    const Mat3 w2c = fb.camera.rotation();
    const Vec3 cam_center = fb.camera.center();
    const double fx = fb.camera.fx, fy = fb.camera.fy;

    detail::parallel_chunks(static_cast<int>(n_splats), opts.threads, opts.deterministic,
                            [&](int si, int) {
        const double* a = acc.data() + static_cast<size_t>(si) * kAccStride;
        bool any = false;
        for (int k = 0; k < kAccStride; ++k) any = any || a[k] != 0.0;
        if (!any) return;

        const RenderSplat& sp = fb.splats[si];
        const int gi = sp.source_index;
        const Gaussian& g = cloud.gaussians[gi];

        const Vec2 d_mean(a[0], a[1]);
        Mat2 d_conic;
        d_conic << a[2], a[3], a[3], a[4];
        const double d_opacity = a[5];
        const Vec3 d_rgb(a[6], a[7], a[8]);

        // Opacity logit.
        grads.opacity_logit[gi] += d_opacity * sp.opacity * (1.0 - sp.opacity);

        // Color coefficients (+ direction term for view-dependent degrees).
        Vec3 d_dir_sh = Vec3::Zero();
        {
            std::span<double> dcol(grads.color.data() + static_cast<size_t>(gi) * grads.color_dim,
                                   static_cast<size_t>(grads.color_dim));
            Vec3 dir = Vec3::Zero();
            if (cloud.sh_degree > 0) dir = (g.position - cam_center).normalized();
            d_dir_sh = sh_backward(cloud.sh_degree, g.color, dir, sp.clamped, d_rgb, dcol);
        }

        // Conic -> dilated 2D covariance.
        const Mat2 d_cov2d = -(sp.conic * d_conic * sp.conic);

        // 2D covariance -> camera-frame covariance pieces.
        const auto ratios = detail::clamped_view_ratios(sp.p_cam, fb.camera);
        const Eigen::Matrix<double, 2, 3> j = detail::ewa_jacobian(sp.p_cam, fb.camera, ratios);
        const Eigen::Matrix<double, 2, 3> aj = j * w2c;

        const Vec3 s = g.scale();
        const Mat3 rot = quat_to_rotmat(normalized_quat(g.rotation));
        const Mat3 m = rot * s.asDiagonal();
        const Mat3 sigma3 = m * m.transpose();
        const Mat3 b = w2c * sigma3 * w2c.transpose();

        const Mat3 d_sigma3 = aj.transpose() * d_cov2d * aj;
        const Eigen::Matrix<double, 2, 3> d_j = (d_cov2d + d_cov2d.transpose()) * j * b;

        // Position: exact projection Jacobian for the mean, plus the covariance
        // dependence through the clamped EWA Jacobian.
        const double x = sp.p_cam.x(), y = sp.p_cam.y(), z = sp.p_cam.z();
        Eigen::Matrix<double, 2, 3> j_mean;
        j_mean << fx / z, 0.0, -fx * x / (z * z),
            0.0, fy / z, -fy * y / (z * z);
        Vec3 d_pcam = j_mean.transpose() * d_mean;

        const double mx = ratios.x_free ? 1.0 : 0.0;
        const double my = ratios.y_free ? 1.0 : 0.0;
        d_pcam.x() += d_j(0, 2) * (-fx * mx / (z * z));
        d_pcam.y() += d_j(1, 2) * (-fy * my / (z * z));
        d_pcam.z() += d_j(0, 0) * (-fx / (z * z)) + d_j(1, 1) * (-fy / (z * z)) +
                      d_j(0, 2) * (fx * (mx * x / z + ratios.rx) / (z * z)) +
                      d_j(1, 2) * (fy * (my * y / z + ratios.ry) / (z * z));

        Vec3 d_pos = w2c.transpose() * d_pcam;

        if (cloud.sh_degree > 0 && !d_dir_sh.isZero()) {
            const Vec3 v = g.position - cam_center;
            const double norm = v.norm();
            const Vec3 dir = v / norm;
            d_pos += (d_dir_sh - dir * d_dir_sh.dot(dir)) / norm;
        }
        for (int k = 0; k < 3; ++k) grads.position[static_cast<size_t>(gi) * 3 + k] += d_pos[k];

        // Camera-frame covariance -> world covariance factor M = R * S.
        const Mat3 d_m = (d_sigma3 + d_sigma3.transpose()) * m;

        const Mat3 rt_dm = rot.transpose() * d_m;
        for (int k = 0; k < 3; ++k)
            grads.log_scale[static_cast<size_t>(gi) * 3 + k] += rt_dm(k, k) * s[k];

        const Mat3 d_rot = d_m * s.asDiagonal();
        const Vec4 q = normalized_quat(g.rotation);
        const auto dr_dq = detail::rotmat_quat_partials(q);
        Vec4 d_q_unit;
        for (int k = 0; k < 4; ++k) d_q_unit[k] = (d_rot.array() * dr_dq[k].array()).sum();
        const Vec4 d_q_raw = (d_q_unit - q * d_q_unit.dot(q)) / g.rotation.norm();
        for (int k = 0; k < 4; ++k) grads.rotation[static_cast<size_t>(gi) * 4 + k] += d_q_raw[k];
    });

    return grads;
}

} // namespace cobsplat
