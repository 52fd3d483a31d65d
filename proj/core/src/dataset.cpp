#include "cobsplat/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cobsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

std::string view_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", index);
    return buf;
}

} // namespace

std::vector<Camera> load_cameras_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ParseError(path.string() + ": expected a JSON array");

    std::vector<Camera> cams;
    cams.reserve(doc.size());
    for (size_t i = 0; i < doc.size(); ++i) {
        const json& rec = doc[i];
        const auto field = [&](const char* name) -> double {
            if (!rec.contains(name))
                throw ParseError(path.string() + ": camera " + std::to_string(i) +
                                 " missing field '" + name + "'");
            return rec[name].get<double>();
        };
        Camera c;
        c.width = static_cast<int>(field("width"));
        c.height = static_cast<int>(field("height"));
        c.fx = field("fx");
        c.fy = field("fy");
        c.cx = field("cx");
        c.cy = field("cy");
        c.world_to_camera_q = Vec4(field("qw"), field("qx"), field("qy"), field("qz"));
        c.translation = Vec3(field("tx"), field("ty"), field("tz"));
        c.near = field("near");
        c.far = field("far");
        c.validate(static_cast<int>(i));
        cams.push_back(c);
    }
    return cams;
}

void save_cameras_json(const std::vector<Camera>& cameras, const fs::path& path) {
    json doc = json::array();
    for (const Camera& c : cameras) {
        doc.push_back({{"width", c.width},
                       {"height", c.height},
                       {"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"qw", c.world_to_camera_q[0]},
                       {"qx", c.world_to_camera_q[1]},
                       {"qy", c.world_to_camera_q[2]},
                       {"qz", c.world_to_camera_q[3]},
                       {"tx", c.translation.x()},
                       {"ty", c.translation.y()},
                       {"tz", c.translation.z()},
                       {"near", c.near},
                       {"far", c.far}});
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());

    Dataset ds;
    ds.cameras = load_cameras_json(dir / "cameras.json");

    const fs::path img_dir = dir / "images";
    if (!fs::is_directory(img_dir)) throw ValidationError("missing images/ in " + dir.string());
    const auto img_files = sorted_pngs(img_dir);
    if (img_files.size() != ds.cameras.size())
        throw ValidationError(dir.string() + ": " + std::to_string(img_files.size()) +
                              " images for " + std::to_string(ds.cameras.size()) + " cameras");
    ds.images.reserve(img_files.size());
    for (const auto& f : img_files) ds.images.push_back(load_png(f));

    const fs::path mask_root = dir / "masks";
    if (fs::is_directory(mask_root)) {
        for (const auto& e : fs::directory_iterator(mask_root)) {
            if (!e.is_directory()) continue;
            int obj = 0;
            try {
                obj = std::stoi(e.path().filename().string());
            } catch (...) {
                throw ValidationError("masks/ subdirectory '" + e.path().filename().string() +
                                      "' is not an object id");
            }
            const auto mask_files = sorted_pngs(e.path());
            if (mask_files.size() != ds.cameras.size())
                throw ValidationError("object " + std::to_string(obj) + ": " +
                                      std::to_string(mask_files.size()) + " masks for " +
                                      std::to_string(ds.cameras.size()) + " views");
            std::vector<Mask> masks;
            masks.reserve(mask_files.size());
            for (const auto& f : mask_files) masks.push_back(load_mask_png(f));
            ds.mask_sets.emplace(obj, std::move(masks));
        }
    }

    ds.validate();
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir / "images");
    save_cameras_json(dataset.cameras, dir / "cameras.json");
    for (size_t i = 0; i < dataset.images.size(); ++i)
        save_png(dataset.images[i], dir / "images" / view_name(static_cast<int>(i)));
    for (const auto& [obj, masks] : dataset.mask_sets) {
        const fs::path mdir = dir / "masks" / std::to_string(obj);
        fs::create_directories(mdir);
        for (size_t i = 0; i < masks.size(); ++i)
            save_mask_png(masks[i], mdir / view_name(static_cast<int>(i)));
    }
}

} // namespace cobsplat
