#include "cobsplat/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace cobsplat {

static_assert(std::endian::native == std::endian::little,
              "PLY I/O assumes a little-endian host");

namespace {

struct Property {
    std::string name;
    char kind;   // 'f' float32, 'i' int32, 's' skipped
    int size;    // bytes
    int offset;  // within one element
};

struct Header {
    long count = 0;
    int stride = 0;
    std::vector<Property> props;
    size_t payload_offset = 0;

    const Property* find(const std::string& name) const {
        for (const auto& p : props)
            if (p.name == name) return &p;
        return nullptr;
    }
};

int type_size(const std::string& t) {
    if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" ||
        t == "uint32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    return -1;
}

Header parse_header(const std::vector<char>& bytes, const std::string& path) {
    Header hdr;
    size_t pos = 0;
    int line_no = 0;
    bool saw_format = false, saw_end = false, in_vertex = false;

    const auto fail = [&](const std::string& msg) {
        throw ParseError("PLY parse error in " + path + " at byte " + std::to_string(pos) + ": " +
                         msg);
    };

    while (pos < bytes.size()) {
        const char* nl = static_cast<const char*>(
            std::memchr(bytes.data() + pos, '\n', bytes.size() - pos));
        if (!nl) fail("header has no newline-terminated line " + std::to_string(line_no));
        std::string line(bytes.data() + pos, nl);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const size_t line_start = pos;
        pos = static_cast<size_t>(nl - bytes.data()) + 1;
        ++line_no;

        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (line_no == 1) {
            if (tok != "ply") fail("missing 'ply' magic");
            continue;
        }
        if (tok == "format") {
            std::string fmt, ver;
            ss >> fmt >> ver;
            if (fmt != "binary_little_endian")
                fail("unsupported format '" + fmt + "' (need binary_little_endian)");
            saw_format = true;
        } else if (tok == "comment" || tok == "obj_info") {
            continue;
        } else if (tok == "element") {
            std::string name;
            long count = 0;
            ss >> name >> count;
            if (name != "vertex") fail("unsupported element '" + name + "'");
            if (in_vertex) fail("duplicate vertex element");
            if (count < 0) fail("negative element count");
            in_vertex = true;
            hdr.count = count;
        } else if (tok == "property") {
            if (!in_vertex) fail("property before element");
            std::string type, name;
            ss >> type >> name;
            if (type == "list") fail("list properties are not supported");
            const int size = type_size(type);
            if (size < 0) fail("unknown property type '" + type + "'");
            char kind = 's';
            if (size == 4 && (type == "float" || type == "float32")) kind = 'f';
            if (size == 4 && (type == "int" || type == "int32")) kind = 'i';
            hdr.props.push_back({name, kind, size, hdr.stride});
            hdr.stride += size;
        } else if (tok == "end_header") {
            saw_end = true;
            hdr.payload_offset = pos;
            break;
        } else {
            pos = line_start;
            fail("unexpected header line '" + line + "'");
        }
    }
    if (!saw_end) fail("missing end_header");
    if (!saw_format) fail("missing format declaration");
    if (!in_vertex && hdr.count != 0) fail("missing vertex element");
    return hdr;
}

float read_f32(const char* base) {
    float v;
    std::memcpy(&v, base, 4);
    return v;
}

int32_t read_i32(const char* base) {
    int32_t v;
    std::memcpy(&v, base, 4);
    return v;
}

const Property* require_float(const Header& hdr, const std::string& name,
                              const std::string& path) {
    const Property* p = hdr.find(name);
    if (!p)
        throw ParseError("PLY " + path + ": missing required property '" + name + "'");
    if (p->kind != 'f')
        throw ParseError("PLY " + path + ": property '" + name + "' must be float32");
    return p;
}

} // namespace

GaussianCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open PLY: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();

    const std::string pname = path.string();
    const Header hdr = parse_header(bytes, pname);

    const size_t available = bytes.size() - hdr.payload_offset;
    const size_t needed = static_cast<size_t>(hdr.count) * hdr.stride;
    if (available < needed) {
        const long complete = hdr.stride > 0 ? static_cast<long>(available / hdr.stride) : 0;
        throw ParseError("PLY " + pname + ": payload truncated, header declares " +
                         std::to_string(hdr.count) + " elements but element " +
                         std::to_string(complete) + " is incomplete");
    }

    // Required properties.
    const Property* px = require_float(hdr, "x", pname);
    const Property* py = require_float(hdr, "y", pname);
    const Property* pz = require_float(hdr, "z", pname);
    const Property* pdc[3] = {require_float(hdr, "f_dc_0", pname),
                              require_float(hdr, "f_dc_1", pname),
                              require_float(hdr, "f_dc_2", pname)};
    const Property* pop = require_float(hdr, "opacity", pname);
    const Property* psc[3] = {require_float(hdr, "scale_0", pname),
                              require_float(hdr, "scale_1", pname),
                              require_float(hdr, "scale_2", pname)};
    const Property* prot[4] = {require_float(hdr, "rot_0", pname),
                               require_float(hdr, "rot_1", pname),
                               require_float(hdr, "rot_2", pname),
                               require_float(hdr, "rot_3", pname)};

    // f_rest count determines the spherical-harmonic degree.
    int rest_count = 0;
    while (hdr.find("f_rest_" + std::to_string(rest_count))) ++rest_count;
    int degree = -1;
    for (int d = 0; d <= 3; ++d)
        if (rest_count == 3 * (sh_coeff_count(d) - 1)) degree = d;
    if (degree < 0)
        throw ParseError("PLY " + pname + ": " + std::to_string(rest_count) +
                         " f_rest properties do not match any degree in 0..3");
    std::vector<const Property*> prest(rest_count);
    for (int k = 0; k < rest_count; ++k)
        prest[k] = require_float(hdr, "f_rest_" + std::to_string(k), pname);

    const Property* pmask = hdr.find("mask_logit");
    if (pmask && pmask->kind != 'f')
        throw ParseError("PLY " + pname + ": mask_logit must be float32");
    const Property* pobj = hdr.find("obj_id");
    if (pobj && pobj->kind != 'i')
        throw ParseError("PLY " + pname + ": obj_id must be int32");

    GaussianCloud cloud;
    cloud.sh_degree = degree;
    cloud.gaussians.resize(hdr.count);
    const int coeffs = sh_coeff_count(degree);
    const int rest_per_ch = coeffs - 1;

    for (long i = 0; i < hdr.count; ++i) {
        const char* base = bytes.data() + hdr.payload_offset + static_cast<size_t>(i) * hdr.stride;
        Gaussian& g = cloud.gaussians[i];

        const auto f = [&](const Property* p) { return read_f32(base + p->offset); };
        const auto check = [&](double v, const char* field) {
            if (!std::isfinite(v))
                throw ParseError("PLY " + pname + ": element " + std::to_string(i) +
                                 " has non-finite " + field);
            return v;
        };

        g.position = Vec3(check(f(px), "x"), check(f(py), "y"), check(f(pz), "z"));
        g.log_scale = Vec3(check(f(psc[0]), "scale_0"), check(f(psc[1]), "scale_1"),
                           check(f(psc[2]), "scale_2"));
        g.rotation =
            Vec4(check(f(prot[0]), "rot_0"), check(f(prot[1]), "rot_1"),
                 check(f(prot[2]), "rot_2"), check(f(prot[3]), "rot_3"));
        g.opacity_logit = check(f(pop), "opacity");
        g.color.resize(3 * coeffs);
        for (int ch = 0; ch < 3; ++ch) {
            g.color[ch] = check(f(pdc[ch]), "f_dc");
            // f_rest is channel-major: all coefficients of R, then G, then B.
            for (int k = 0; k < rest_per_ch; ++k)
                g.color[(k + 1) * 3 + ch] = check(f(prest[ch * rest_per_ch + k]), "f_rest");
        }
        g.mask_logit = pmask ? check(f(pmask), "mask_logit") : 0.0;
        g.obj_id = pobj ? read_i32(base + pobj->offset) : 0;
    }
    return cloud;
}

void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path) {
    const int coeffs = sh_coeff_count(cloud.sh_degree);
    const int rest_per_ch = coeffs - 1;

    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\n";
    hdr << "element vertex " << cloud.size() << "\n";
    for (const char* n : {"x", "y", "z"}) hdr << "property float " << n << "\n";
    for (int c = 0; c < 3; ++c) hdr << "property float f_dc_" << c << "\n";
    for (int k = 0; k < 3 * rest_per_ch; ++k) hdr << "property float f_rest_" << k << "\n";
    hdr << "property float opacity\n";
    for (int c = 0; c < 3; ++c) hdr << "property float scale_" << c << "\n";
    for (int c = 0; c < 4; ++c) hdr << "property float rot_" << c << "\n";
    hdr << "property float mask_logit\n";
    hdr << "property int obj_id\n";
    hdr << "end_header\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write PLY: " + path.string());
    const std::string header = hdr.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    // 15 base floats (xyz, dc, opacity, scale, rot, mask_logit) + rest + int32 obj_id.
    std::vector<char> row(4 * (15 + 3 * rest_per_ch) + 4);
    for (const Gaussian& g : cloud.gaussians) {
        char* p = row.data();
        const auto put_f = [&p](double v) {
            const float f = static_cast<float>(v);
            std::memcpy(p, &f, 4);
            p += 4;
        };
        put_f(g.position.x());
        put_f(g.position.y());
        put_f(g.position.z());
        for (int ch = 0; ch < 3; ++ch) put_f(g.color[ch]);
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < rest_per_ch; ++k) put_f(g.color[(k + 1) * 3 + ch]);
        put_f(g.opacity_logit);
        for (int c = 0; c < 3; ++c) put_f(g.log_scale[c]);
        for (int c = 0; c < 4; ++c) put_f(g.rotation[c]);
        put_f(g.mask_logit);
        std::memcpy(p, &g.obj_id, 4);
        p += 4;
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw ValidationError("I/O failure while writing PLY: " + path.string());
}

} // namespace cobsplat
