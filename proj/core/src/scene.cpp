#include "cobsplat/scene.hpp"

#include <string>

namespace cobsplat {

Mat3 quat_to_rotmat(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Vec4 normalized_quat(const Vec4& q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw ValidationError("quaternion has non-positive or non-finite norm");
    return q / n;
}

void GaussianCloud::validate() const {
    const int dim = color_dim();
    for (size_t i = 0; i < gaussians.size(); ++i) {
        const Gaussian& g = gaussians[i];
        const auto bad = [&](const std::string& field) {
            throw ValidationError("gaussian " + std::to_string(i) + ": non-finite " + field);
        };
        if (!g.position.allFinite()) bad("position");
        if (!g.log_scale.allFinite()) bad("scale");
        if (!g.rotation.allFinite()) bad("rotation");
        if (!std::isfinite(g.opacity_logit)) bad("opacity");
        if (!std::isfinite(g.mask_logit)) bad("mask_logit");
        if (!g.color.allFinite()) bad("color");
        if (g.color.size() != dim)
            throw ValidationError("gaussian " + std::to_string(i) + ": color has " +
                                  std::to_string(g.color.size()) + " coefficients, expected " +
                                  std::to_string(dim));
        if (std::abs(g.rotation.norm() - 1.0) > 1e-6)
            throw ValidationError("gaussian " + std::to_string(i) + ": quaternion not unit norm");
    }
}

void Camera::validate(int view_index) const {
    const std::string where =
        view_index >= 0 ? "view " + std::to_string(view_index) + ": " : std::string();
    if (width < 1 || height < 1) throw ValidationError(where + "camera has empty image plane");
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError(where + "camera focal must be positive");
    if (!(near > 0.0) || !(far > near))
        throw ValidationError(where + "camera requires 0 < near < far");
    if (!world_to_camera_q.allFinite() || !translation.allFinite())
        throw ValidationError(where + "camera pose is non-finite");
}

bool Dataset::view_covered(int obj_id, int view) const {
    const auto it = mask_coverage.find(obj_id);
    if (it == mask_coverage.end()) return true;
    if (view < 0 || view >= static_cast<int>(it->second.size())) return true;
    return it->second[view] != 0;
}

void Dataset::validate() const {
    const size_t v = cameras.size();
    if (images.size() != v)
        throw ValidationError("dataset has " + std::to_string(images.size()) + " images for " +
                              std::to_string(v) + " cameras");
    for (size_t i = 0; i < v; ++i) {
        cameras[i].validate(static_cast<int>(i));
        if (images[i].width != cameras[i].width || images[i].height != cameras[i].height)
            throw ValidationError("view " + std::to_string(i) + ": image " +
                                  std::to_string(images[i].width) + "x" +
                                  std::to_string(images[i].height) + " vs camera " +
                                  std::to_string(cameras[i].width) + "x" +
                                  std::to_string(cameras[i].height));
    }
    for (const auto& [obj, masks] : mask_sets) {
        if (masks.size() != v)
            throw ValidationError("object " + std::to_string(obj) + ": " +
                                  std::to_string(masks.size()) + " masks for " +
                                  std::to_string(v) + " views");
        for (size_t i = 0; i < v; ++i) {
            if (masks[i].width != cameras[i].width || masks[i].height != cameras[i].height)
                throw ValidationError("view " + std::to_string(i) + ": mask " +
                                      std::to_string(masks[i].width) + "x" +
                                      std::to_string(masks[i].height) + " vs camera " +
                                      std::to_string(cameras[i].width) + "x" +
                                      std::to_string(cameras[i].height));
        }
    }
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, int width, int height,
                      double fx, double fy, double near, double far) {
    Vec3 forward = (target - eye).normalized(); // camera +z
    Vec3 up_hint(0.0, 1.0, 0.0);
    if (std::abs(forward.dot(up_hint)) > 0.999) up_hint = Vec3(0.0, 0.0, 1.0);
    const Vec3 right = up_hint.cross(forward).normalized(); // camera +x
    const Vec3 down = forward.cross(right);                 // camera +y

    Mat3 r; // rows are the camera axes expressed in world coordinates
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    Eigen::Quaterniond eq(r);
    eq.normalize();

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.world_to_camera_q = Vec4(eq.w(), eq.x(), eq.y(), eq.z());
    cam.translation = -(r * eye);
    cam.near = near;
    cam.far = far;
    return cam;
}

} // namespace cobsplat
