#pragma once

#include <filesystem>

#include "cobsplat/scene.hpp"

namespace cobsplat {

// Scene directory layout:
//   cameras.json          array of pinhole records (see load_cameras_json)
//   images/<name>.png     one 8-bit RGB image per view, sorted by filename
//   masks/<obj_id>/*.png  binary masks per object, same ordering
// masks/ is optional; a missing directory yields an empty mask_sets map.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// cameras.json records: {"width","height","fx","fy","cx","cy","qw","qx","qy",
// "qz","tx","ty","tz","near","far"}; rotation maps world to camera and the
// camera looks down +z.
std::vector<Camera> load_cameras_json(const std::filesystem::path& path);
void save_cameras_json(const std::vector<Camera>& cameras, const std::filesystem::path& path);

} // namespace cobsplat
