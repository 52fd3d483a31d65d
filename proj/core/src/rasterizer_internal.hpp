#pragma once

#include <functional>
#include <thread>
#include <vector>

#include "cobsplat/rasterizer.hpp"

namespace cobsplat::detail {

// Static round-robin chunk scheduling: chunk c goes to slot c % slots. Output
// depends only on the slot count, not on thread timing.
inline void parallel_chunks(int chunk_count, int threads, bool deterministic,
                            const std::function<void(int chunk, int slot)>& fn) {
    const int slots = deterministic ? 1 : std::max(1, std::min(threads, chunk_count));
    if (slots == 1) {
        for (int c = 0; c < chunk_count; ++c) fn(c, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(slots - 1);
    const auto worker = [&](int slot) {
        for (int c = slot; c < chunk_count; c += slots) fn(c, slot);
    };
    for (int s = 1; s < slots; ++s) pool.emplace_back(worker, s);
    worker(0);
    for (auto& t : pool) t.join();
}

inline int slot_count(int chunk_count, int threads, bool deterministic) {
    return deterministic ? 1 : std::max(1, std::min(threads, chunk_count));
}

// Frustum guard used when building the EWA Jacobian; ratios x/z and y/z are
// clamped to 1.3x the tangent of the half field of view.
struct ClampedRatios {
    double rx, ry;
    bool x_free, y_free; // gradient flows only when unclamped
};

inline ClampedRatios clamped_view_ratios(const Vec3& p_cam, const Camera& cam) {
    const double limx = 1.3 * (0.5 * cam.width / cam.fx);
    const double limy = 1.3 * (0.5 * cam.height / cam.fy);
    const double tx = p_cam.x() / p_cam.z();
    const double ty = p_cam.y() / p_cam.z();
    ClampedRatios r;
    r.x_free = tx > -limx && tx < limx;
    r.y_free = ty > -limy && ty < limy;
    r.rx = std::min(limx, std::max(-limx, tx));
    r.ry = std::min(limy, std::max(-limy, ty));
    return r;
}

// 2x3 Jacobian of the pinhole projection at p_cam with clamped ratios.
inline Eigen::Matrix<double, 2, 3> ewa_jacobian(const Vec3& p_cam, const Camera& cam,
                                                const ClampedRatios& r) {
    const double z = p_cam.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0.0, -cam.fx * r.rx / z,
        0.0, cam.fy / z, -cam.fy * r.ry / z;
    return j;
}

// Partial derivatives of the rotation matrix with respect to the unit
// quaternion components (w, x, y, z).
inline std::array<Mat3, 4> rotmat_quat_partials(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y, z, 0, -x, -y, x, 0;          // d/dw
    d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;  // d/dx
    d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;  // d/dy
    d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;  // d/dz
    for (auto& m : d) m *= 2.0;
    return d;
}

} // namespace cobsplat::detail
