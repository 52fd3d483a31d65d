#pragma once

#include <filesystem>

#include "cobsplat/scene.hpp"

namespace cobsplat {

// Binary little-endian PLY in the standard splat checkpoint layout:
//   x y z, f_dc_0..2, f_rest_0..{3*((deg+1)^2-1)-1} (channel-major, omitted at
//   deg 0), opacity (logit), scale_0..2 (log), rot_0..3 (w,x,y,z quaternion),
//   mask_logit (float32), obj_id (int32).
//
// load_ply tolerates extra properties (e.g. nx/ny/nz normals) and missing
// mask_logit / obj_id, which default to 0. Field values are kept bit-exact:
// the float32 payload survives a load/save round trip unchanged.
GaussianCloud load_ply(const std::filesystem::path& path);
void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path);

} // namespace cobsplat
