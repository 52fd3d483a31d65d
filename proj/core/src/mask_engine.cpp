#include "cobsplat/mask_engine.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cobsplat/rng.hpp"

namespace cobsplat {

double mask_loss(std::span<const double> rendered, const Mask& gt) {
    if (rendered.size() != gt.data.size())
        throw ValidationError("mask_loss: rendered plane has " +
                              std::to_string(rendered.size()) + " pixels, mask has " +
                              std::to_string(gt.data.size()));
    double loss = 0.0;
    for (size_t i = 0; i < rendered.size(); ++i)
        loss += gt.data[i] ? -rendered[i] : rendered[i];
    return loss;
}

double mask_sig(int pos, int neg, double eps) {
    return std::abs(static_cast<double>(pos - neg) / (static_cast<double>(pos + neg) + eps));
}

void accumulate_view(MaskStats& stats, const MaskBackward& mb, double eps) {
    if (stats.size() != mb.pos_count.size())
        throw ContractViolation("accumulate_view: stats sized " + std::to_string(stats.size()) +
                                " but view has " + std::to_string(mb.pos_count.size()) +
                                " splats");
    for (size_t i = 0; i < stats.size(); ++i) {
        const int covered = mb.pos_count[i] + mb.neg_count[i];
        if (covered < 1) continue;
        stats.sig_sum[i] += mask_sig(mb.pos_count[i], mb.neg_count[i], eps);
        ++stats.observed_views[i];
    }
}

BoundarySet select_boundary(const MaskStats& stats, double delta) {
    BoundarySet bset;
    bset.selected_threshold = delta;
    for (size_t i = 0; i < stats.size(); ++i)
        if (stats.observed_views[i] >= 1 && stats.mean_sig(i) < delta)
            bset.indices.push_back(static_cast<int>(i));
    return bset;
}

std::vector<double> projected_footprints_px(const GaussianCloud& cloud,
                                            std::span<const Camera> cameras) {
    std::vector<double> out(cloud.size(), std::numeric_limits<double>::infinity());
    std::vector<double> per_view;
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        const double max_s = g.scale().maxCoeff();
        per_view.clear();
        for (const Camera& cam : cameras) {
            const double z = cam.to_camera(g.position).z();
            if (!(z > cam.near) || !(z < cam.far)) continue;
            per_view.push_back(3.0 * max_s * cam.fx / z);
        }
        if (per_view.empty()) continue;
        std::sort(per_view.begin(), per_view.end());
        out[i] = per_view[per_view.size() / 2];
    }
    return out;
}

std::string SplitReport::to_json() const {
    nlohmann::json doc;
    doc["excluded_small"] = excluded_small;
    doc["splits"] = nlohmann::json::array();
    for (const auto& e : entries)
        doc["splits"].push_back({{"parent", e.parent_index},
                                 {"children", {e.child_a, e.child_b}},
                                 {"mean_sig", e.mean_sig},
                                 {"observed_views", e.observed_views}});
    return doc.dump(2);
}

SplitResult split_boundary(const GaussianCloud& cloud, const BoundarySet& bset,
                           std::span<const double> footprints_px, double min_footprint_px,
                           uint64_t seed, const MaskStats* stats) {
    if (footprints_px.size() != cloud.size())
        throw ContractViolation("split_boundary: footprint array size mismatch");

    std::vector<uint8_t> is_split(cloud.size(), 0);
    SplitResult result;
    result.cloud.sh_degree = cloud.sh_degree;

    std::vector<int> parents;
    for (const int idx : bset.indices) {
        if (idx < 0 || idx >= static_cast<int>(cloud.size()))
            throw ContractViolation("split_boundary: boundary index out of range");
        if (footprints_px[idx] < min_footprint_px) {
            ++result.report.excluded_small;
            continue;
        }
        is_split[idx] = 1;
        parents.push_back(idx);
    }

    result.cloud.gaussians.reserve(cloud.size() + parents.size());
    for (size_t i = 0; i < cloud.size(); ++i)
        if (!is_split[i]) result.cloud.gaussians.push_back(cloud.gaussians[i]);

    Rng rng(Rng::mix(seed, 0x5117));
    constexpr double log_divisor = 0.47000362924573563; // ln(1.6)
    for (const int pi : parents) {
        const Gaussian& parent = cloud.gaussians[pi];
        const Mat3 rot = quat_to_rotmat(normalized_quat(parent.rotation));
        const Vec3 s = parent.scale();

        SplitRecord rec;
        rec.parent_index = pi;
        rec.mean_sig = stats ? stats->mean_sig(pi) : 0.0;
        rec.observed_views = stats ? stats->observed_views[pi] : 0;

        for (int child = 0; child < 2; ++child) {
            Gaussian g = parent;
            const Vec3 z(rng.normal(), rng.normal(), rng.normal());
            g.position = parent.position + rot * (s.asDiagonal() * z);
            g.log_scale = parent.log_scale.array() - log_divisor;
            (child == 0 ? rec.child_a : rec.child_b) =
                static_cast<int>(result.cloud.gaussians.size());
            result.cloud.gaussians.push_back(std::move(g));
        }
        result.report.entries.push_back(rec);
    }
    return result;
}

std::vector<double> chain_mask_grads(const GaussianCloud& cloud,
                                     std::span<const double> d_mask_label) {
    if (d_mask_label.size() != cloud.size())
        throw ContractViolation("chain_mask_grads: gradient size mismatch");
    std::vector<double> out(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        const double m = cloud.gaussians[i].mask_label();
        out[i] = d_mask_label[i] * m * (1.0 - m);
    }
    return out;
}

void step_mask_logits(GaussianCloud& cloud, std::span<const double> d_mask_logit,
                      AdamState& state, double lr) {
    if (d_mask_logit.size() != cloud.size())
        throw ContractViolation("step_mask_logits: gradient size mismatch");
    std::vector<double> logits(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) logits[i] = cloud.gaussians[i].mask_logit;
    state.step(logits, d_mask_logit, lr);
    for (size_t i = 0; i < cloud.size(); ++i) cloud.gaussians[i].mask_logit = logits[i];
}

} // namespace cobsplat
