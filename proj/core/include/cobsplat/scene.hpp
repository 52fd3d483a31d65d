#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "cobsplat/error.hpp"
#include "cobsplat/image.hpp"

namespace cobsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Rotation matrix of a unit quaternion stored as (w, x, y, z).
Mat3 quat_to_rotmat(const Vec4& q);
Vec4 normalized_quat(const Vec4& q);

// One anisotropic splat. Bounded quantities are stored in unconstrained
// domains: scale as log standard deviations, opacity and the segmentation
// label as logits, so gradient steps cannot leave the valid range.
struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation{1.0, 0.0, 0.0, 0.0}; // quaternion (w,x,y,z)
    double opacity_logit = 0.0;
    Eigen::VectorXd color;             // 3*(deg+1)^2 coefficients, layout [coeff][rgb]
    double mask_logit = 0.0;           // sigmoid(mask_logit) = segmentation label m
    int32_t obj_id = 0;                // 0 = unassigned/background, k >= 1 = object k

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    double mask_label() const { return sigmoid(mask_logit); }
};

struct GaussianCloud {
    int sh_degree = 0;
    std::vector<Gaussian> gaussians;

    size_t size() const { return gaussians.size(); }
    int color_dim() const { return 3 * sh_coeff_count(sh_degree); }
    // Throws ValidationError on non-finite fields, wrong color dimension, or
    // a quaternion more than 1e-6 away from unit norm.
    void validate() const;
};

// Pinhole camera. world_to_camera rotates world points into the camera frame
// (p_cam = R * p_world + translation); the camera looks down +z.
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    Vec4 world_to_camera_q{1.0, 0.0, 0.0, 0.0};
    Vec3 translation = Vec3::Zero();
    double near = 0.01;
    double far = 100.0;

    Mat3 rotation() const { return quat_to_rotmat(normalized_quat(world_to_camera_q)); }
    Vec3 to_camera(const Vec3& p_world) const { return rotation() * p_world + translation; }
    // Camera origin in world coordinates.
    Vec3 center() const { return -(rotation().transpose() * translation); }
    void validate(int view_index = -1) const;
};

// Posed views with ground-truth images and per-object binary mask sets.
struct Dataset {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::map<int, std::vector<Mask>> mask_sets;
    // Optional per-object coverage: 0 marks views whose mask generation failed
    // and which training should skip. Absent object id means full coverage.
    std::map<int, std::vector<uint8_t>> mask_coverage;

    int view_count() const { return static_cast<int>(cameras.size()); }
    bool view_covered(int obj_id, int view) const;
    void validate() const;
};

// Camera at `eye` looking at `target` with +y of the world as up hint.
Camera look_at_camera(const Vec3& eye, const Vec3& target, int width, int height,
                      double fx, double fy, double near = 0.05, double far = 100.0);

} // namespace cobsplat
