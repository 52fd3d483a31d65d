#include "cobsplat/refine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cobsplat/image_metrics.hpp"
#include "cobsplat/rng.hpp"

namespace cobsplat {

using nlohmann::json;

namespace {

json finite_or_inf(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

std::vector<int> covered_train_views(const Dataset& ds, int obj_id, const RefineConfig& cfg) {
    std::vector<int> views;
    for (const int v : train_view_indices(ds.view_count(), cfg.holdout_every))
        if (ds.view_covered(obj_id, v)) views.push_back(v);
    return views;
}

Mask threshold_alpha(const FrameBuffer& fb) {
    Mask m(fb.width, fb.height);
    for (size_t i = 0; i < fb.final_transmittance.size(); ++i)
        m.data[i] = (1.0 - fb.final_transmittance[i]) >= 0.5 ? 1 : 0;
    return m;
}

GaussianCloud subset_cloud(const GaussianCloud& cloud, const std::vector<int>& indices) {
    GaussianCloud sub;
    sub.sh_degree = cloud.sh_degree;
    sub.gaussians.reserve(indices.size());
    for (const int i : indices) sub.gaussians.push_back(cloud.gaussians[i]);
    return sub;
}

} // namespace

std::string to_string(SceneKind kind) {
    return kind == SceneKind::forward ? "forward" : "surround";
}

SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "forward") return SceneKind::forward;
    if (s == "surround") return SceneKind::surround;
    throw ValidationError("scene_kind must be 'forward' or 'surround', got '" + s + "'");
}

RefineConfig RefineConfig::defaults(SceneKind kind) {
    RefineConfig cfg;
    cfg.scene_kind = kind;
    cfg.delta = kind == SceneKind::forward ? 0.5 : 0.8;
    return cfg;
}

int RefineConfig::resolved_phase_iters(int train_views) const {
    return phase_iters > 0 ? phase_iters : 2 * train_views;
}

int RefineConfig::resolved_total_iters(int train_views) const {
    if (total_iters > 0) return total_iters;
    return (scene_kind == SceneKind::forward ? 24 : 16) * train_views;
}

int RefineConfig::rounds(int train_views) const {
    return resolved_total_iters(train_views) / (2 * resolved_phase_iters(train_views));
}

void RefineConfig::validate(int train_views) const {
    if (train_views < 1) throw ValidationError("dataset has no training views");
    if (!(delta > 0.0) || !(delta < 1.0)) throw ValidationError("delta must be in (0,1)");
    if (!(mask_lr > 0.0)) throw ValidationError("mask_lr must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must be in [0,1]");
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    if (tiny_px < 0.0) throw ValidationError("tiny_px must be non-negative");
    if (threads < 1) throw ValidationError("threads must be at least 1");
    if (holdout_every < 0) throw ValidationError("holdout_every must be non-negative");
    const int p = resolved_phase_iters(train_views);
    const int t = resolved_total_iters(train_views);
    if (p < 1) throw ValidationError("phase_iters must be positive");
    if (t < 1) throw ValidationError("total_iters must be positive");
    if (t % (2 * p) != 0)
        throw ValidationError("total_iters (" + std::to_string(t) +
                              ") must be a whole number of mask/texture rounds (multiples of " +
                              std::to_string(2 * p) + ")");
}

RefineConfig RefineConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    const SceneKind kind =
        doc.contains("scene_kind") ? scene_kind_from_string(doc["scene_kind"].get<std::string>())
                                   : SceneKind::forward;
    RefineConfig cfg = defaults(kind);
    const auto get = [&](const char* name, auto& field) {
        if (doc.contains(name)) field = doc[name].get<std::decay_t<decltype(field)>>();
    };
    get("delta", cfg.delta);
    get("phase_iters", cfg.phase_iters);
    get("total_iters", cfg.total_iters);
    get("mask_lr", cfg.mask_lr);
    get("lambda", cfg.lambda);
    get("eps", cfg.eps);
    get("seg_threshold", cfg.seg_threshold);
    get("tiny_px", cfg.tiny_px);
    get("optimize_geometry", cfg.optimize_geometry);
    get("holdout_every", cfg.holdout_every);
    get("threads", cfg.threads);
    get("deterministic", cfg.deterministic);
    get("seed", cfg.seed);
    if (doc.contains("background")) {
        const auto bg = doc["background"];
        if (!bg.is_array() || bg.size() != 3)
            throw ValidationError("background must be an array of 3 numbers");
        cfg.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
    }
    return cfg;
}

std::string RefineConfig::to_json() const {
    json doc{{"scene_kind", to_string(scene_kind)},
             {"delta", delta},
             {"phase_iters", phase_iters},
             {"total_iters", total_iters},
             {"mask_lr", mask_lr},
             {"lambda", lambda},
             {"eps", eps},
             {"seg_threshold", seg_threshold},
             {"tiny_px", tiny_px},
             {"optimize_geometry", optimize_geometry},
             {"holdout_every", holdout_every},
             {"threads", threads},
             {"deterministic", deterministic},
             {"seed", seed},
             {"background", {background[0], background[1], background[2]}}};
    return doc.dump(2);
}

std::vector<int> train_view_indices(int view_count, int holdout_every) {
    std::vector<int> out;
    for (int v = 0; v < view_count; ++v)
        if (holdout_every <= 0 || v % holdout_every != 0) out.push_back(v);
    return out;
}

std::vector<int> heldout_view_indices(int view_count, int holdout_every) {
    std::vector<int> out;
    for (int v = 0; v < view_count; ++v)
        if (holdout_every > 0 && v % holdout_every == 0) out.push_back(v);
    return out;
}

std::string RefineMetrics::to_json() const {
    json doc = json::array();
    for (const auto& p : phases)
        doc.push_back({{"round", p.round},
                       {"kind", p.kind},
                       {"iterations", p.iterations},
                       {"mean_loss", finite_or_inf(p.mean_loss)},
                       {"gaussians_after", p.gaussians_after},
                       {"splits", p.splits},
                       {"excluded_small", p.excluded_small}});
    return doc.dump(2);
}

MaskPhaseResult mask_phase(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                           const RefineConfig& cfg, uint64_t phase_seed, bool allow_split) {
    const auto mask_it = dataset.mask_sets.find(obj_id);
    if (mask_it == dataset.mask_sets.end())
        throw ValidationError("dataset has no mask set for object " + std::to_string(obj_id));
    const std::vector<Mask>& masks = mask_it->second;

    std::vector<int> views = covered_train_views(dataset, obj_id, cfg);
    if (views.empty())
        throw ValidationError("object " + std::to_string(obj_id) +
                              ": no covered training views");

    Rng rng(phase_seed);
    rng.shuffle(views);

    const int iters = cfg.resolved_phase_iters(
        static_cast<int>(train_view_indices(dataset.view_count(), cfg.holdout_every).size()));

    MaskPhaseResult result;
    result.pre_split_count = static_cast<int>(cloud.size());
    result.stats.reset(cloud.size());

    AdamState adam(cloud.size());
    std::vector<uint8_t> accumulated(dataset.view_count(), 0);
    const RenderOptions ropts = cfg.render_options(true);

    double loss_sum = 0.0;
    for (int it = 0; it < iters; ++it) {
        const int v = views[it % views.size()];
        const FrameBuffer fb = render(cloud, dataset.cameras[v], ropts);
        loss_sum += mask_loss(fb.mask, masks[v]);
        const MaskBackward mb = backward_mask(fb, masks[v]);
        // Coverage counts depend only on geometry, which is frozen here, so
        // one accumulation per view captures the whole phase.
        if (!accumulated[v]) {
            accumulate_view(result.stats, mb, cfg.eps);
            accumulated[v] = 1;
        }
        const std::vector<double> grads = chain_mask_grads(cloud, mb.d_mask_label);
        step_mask_logits(cloud, grads, adam, cfg.mask_lr);
    }
    result.mean_loss = iters > 0 ? loss_sum / iters : 0.0;

    std::vector<Camera> train_cams;
    for (const int v : train_view_indices(dataset.view_count(), cfg.holdout_every))
        train_cams.push_back(dataset.cameras[v]);
    result.stats.footprint_px = projected_footprints_px(cloud, train_cams);

    if (allow_split) {
        const BoundarySet bset = select_boundary(result.stats, cfg.delta);
        SplitResult split = split_boundary(cloud, bset, result.stats.footprint_px, cfg.tiny_px,
                                           Rng::mix(phase_seed, 0x517), &result.stats);
        result.split = std::move(split.report);
        result.cloud = std::move(split.cloud);
    } else {
        result.cloud = std::move(cloud);
    }
    return result;
}

TexturePhaseResult texture_phase(GaussianCloud cloud, const Dataset& dataset,
                                 const RefineConfig& cfg, uint64_t phase_seed) {
    std::vector<int> views = train_view_indices(dataset.view_count(), cfg.holdout_every);
    if (views.empty()) throw ValidationError("no training views");

    Rng rng(phase_seed);
    rng.shuffle(views);

    const int iters = cfg.resolved_phase_iters(static_cast<int>(views.size()));
    TextureOptState state(cloud.size(), cloud.color_dim(), iters);
    const RenderOptions ropts = cfg.render_options(true);

    double loss_sum = 0.0;
    for (int it = 0; it < iters; ++it) {
        const int v = views[it % views.size()];
        const FrameBuffer fb = render(cloud, dataset.cameras[v], ropts);
        const Image img = fb.color_image();
        loss_sum += rgb_loss(img, dataset.images[v], cfg.lambda);
        const std::vector<double> d_pixels = rgb_loss_grad(img, dataset.images[v], cfg.lambda);
        const RgbGradients grads = backward_rgb(cloud, fb, d_pixels, ropts);
        step_texture(cloud, grads, state, cfg.optimize_geometry);
    }

    TexturePhaseResult result;
    result.mean_loss = iters > 0 ? loss_sum / iters : 0.0;
    result.cloud = std::move(cloud);
    return result;
}

JointRefineResult joint_refine(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                               const RefineConfig& cfg) {
    const int train_v =
        static_cast<int>(train_view_indices(dataset.view_count(), cfg.holdout_every).size());
    cfg.validate(train_v);

    JointRefineResult result;
    const int rounds = cfg.rounds(train_v);
    const int iters = cfg.resolved_phase_iters(train_v);

    for (int r = 0; r < rounds; ++r) {
        MaskPhaseResult mp =
            mask_phase(std::move(cloud), dataset, obj_id, cfg, Rng::mix(cfg.seed, 2 * r), true);
        cloud = std::move(mp.cloud);
        result.last_mask_stats = std::move(mp.stats);
        result.metrics.phases.push_back({r, "mask", iters, mp.mean_loss,
                                         static_cast<int>(cloud.size()),
                                         static_cast<int>(mp.split.entries.size()),
                                         mp.split.excluded_small});

        TexturePhaseResult tp =
            texture_phase(std::move(cloud), dataset, cfg, Rng::mix(cfg.seed, 2 * r + 1));
        cloud = std::move(tp.cloud);
        result.metrics.phases.push_back(
            {r, "texture", iters, tp.mean_loss, static_cast<int>(cloud.size()), 0, 0});
    }
    result.cloud = std::move(cloud);
    return result;
}

RobustnessResult robustness_pass(const GaussianCloud& cloud, const MaskStats& stats,
                                 const RefineConfig& cfg) {
    if (stats.size() != cloud.size())
        throw ContractViolation("robustness_pass: stats do not match the cloud");

    RobustnessResult result;
    result.cloud.sh_degree = cloud.sh_degree;
    for (size_t i = 0; i < cloud.size(); ++i) {
        const bool ambiguous = stats.observed_views[i] >= 1 && stats.mean_sig(i) < cfg.delta;
        const bool tiny = stats.footprint_px[i] < cfg.tiny_px;
        if (ambiguous && tiny)
            result.removed_indices.push_back(static_cast<int>(i));
        else
            result.cloud.gaussians.push_back(cloud.gaussians[i]);
    }
    return result;
}

SegmentationResult segment(const GaussianCloud& cloud, const RefineConfig& cfg,
                           std::span<const Camera> cameras, const std::vector<Mask>* gt_masks) {
    SegmentationResult result;
    for (size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.gaussians[i].mask_label() > cfg.seg_threshold)
            result.foreground.push_back(static_cast<int>(i));
        else
            result.background.push_back(static_cast<int>(i));
    }

    const GaussianCloud fg = subset_cloud(cloud, result.foreground);
    const GaussianCloud bg = subset_cloud(cloud, result.background);
    const RenderOptions ropts = cfg.render_options(false);

    double iou_sum = 0.0, acc_sum = 0.0;
    for (size_t v = 0; v < cameras.size(); ++v) {
        result.fg_masks.push_back(threshold_alpha(render(fg, cameras[v], ropts)));
        result.bg_masks.push_back(threshold_alpha(render(bg, cameras[v], ropts)));
        if (gt_masks) {
            const double i = iou(result.fg_masks.back(), (*gt_masks)[v]);
            result.per_view_iou.push_back(i);
            iou_sum += i;
            acc_sum += accuracy(result.fg_masks.back(), (*gt_masks)[v]);
        }
    }
    if (gt_masks && !cameras.empty()) {
        result.miou = iou_sum / static_cast<double>(cameras.size());
        result.macc = acc_sum / static_cast<double>(cameras.size());
    }
    return result;
}

MultiObjectResult multi_object_refine(GaussianCloud cloud, const Dataset& dataset,
                                      std::span<const int> object_ids, const RefineConfig& cfg) {
    MultiObjectResult result;
    for (const int obj : object_ids)
        if (dataset.mask_sets.find(obj) == dataset.mask_sets.end())
            throw ValidationError("dataset has no mask set for object " + std::to_string(obj));

    for (const int obj : object_ids) {
        RefineConfig obj_cfg = cfg;
        obj_cfg.seed = Rng::mix(cfg.seed, 50000 + static_cast<uint64_t>(obj));
        JointRefineResult jr = joint_refine(std::move(cloud), dataset, obj, obj_cfg);
        cloud = std::move(jr.cloud);
        for (auto& p : jr.metrics.phases) result.metrics.phases.push_back(p);

        for (size_t i = 0; i < cloud.size(); ++i) {
            Gaussian& g = cloud.gaussians[i];
            if (g.mask_label() <= cfg.seg_threshold) continue;
            if (g.obj_id == 0)
                g.obj_id = obj;
            else if (g.obj_id != obj)
                result.conflicts.push_back({static_cast<int>(i), g.obj_id, obj});
        }
        for (Gaussian& g : cloud.gaussians) g.mask_logit = 0.0;
    }
    result.cloud = std::move(cloud);
    return result;
}

PipelineResult refine_pipeline(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                               const RefineConfig& cfg, bool with_robustness) {
    PipelineResult result;
    JointRefineResult jr = joint_refine(std::move(cloud), dataset, obj_id, cfg);
    result.metrics = std::move(jr.metrics);

    GaussianCloud refined = std::move(jr.cloud);
    std::vector<int> removed;
    if (with_robustness) {
        MaskPhaseResult final_mp = mask_phase(std::move(refined), dataset, obj_id, cfg,
                                              Rng::mix(cfg.seed, 0xF17A1), false);
        result.metrics.phases.push_back({cfg.rounds(static_cast<int>(train_view_indices(
                                             dataset.view_count(), cfg.holdout_every).size())),
                                         "mask", 0, final_mp.mean_loss,
                                         static_cast<int>(final_mp.cloud.size()), 0, 0});
        RobustnessResult rb = robustness_pass(final_mp.cloud, final_mp.stats, cfg);
        removed = std::move(rb.removed_indices);
        refined = std::move(rb.cloud);
    }

    const int pre_removal = static_cast<int>(refined.size() + removed.size());
    const auto* gt = [&]() -> const std::vector<Mask>* {
        const auto it = dataset.mask_sets.find(obj_id);
        return it != dataset.mask_sets.end() ? &it->second : nullptr;
    }();
    SegmentationResult seg = segment(refined, cfg, dataset.cameras, gt);

    // Map the surviving-cloud index sets back to the pre-removal cloud so that
    // foreground/background/removed partition it.
    std::vector<int> survivor_to_original;
    survivor_to_original.reserve(refined.size());
    {
        std::vector<uint8_t> was_removed(pre_removal, 0);
        for (const int r : removed) was_removed[r] = 1;
        for (int i = 0; i < pre_removal; ++i)
            if (!was_removed[i]) survivor_to_original.push_back(i);
    }
    for (int& i : seg.foreground) i = survivor_to_original[i];
    for (int& i : seg.background) i = survivor_to_original[i];
    seg.removed_tiny = removed;

    result.removed_count = static_cast<int>(removed.size());
    result.segmentation = std::move(seg);
    result.cloud = std::move(refined);
    return result;
}

double mean_view_psnr(const GaussianCloud& cloud, const Dataset& dataset,
                      std::span<const int> views, const RefineConfig& cfg) {
    if (views.empty()) return std::numeric_limits<double>::quiet_NaN();
    const RenderOptions ropts = cfg.render_options(false);
    double sum = 0.0;
    for (const int v : views) {
        const FrameBuffer fb = render(cloud, dataset.cameras[v], ropts);
        sum += psnr(fb.color_image(), dataset.images[v]);
    }
    return sum / static_cast<double>(views.size());
}

} // namespace cobsplat
