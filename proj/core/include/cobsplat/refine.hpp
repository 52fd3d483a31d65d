#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cobsplat/dataset.hpp"
#include "cobsplat/mask_engine.hpp"
#include "cobsplat/texture_opt.hpp"

namespace cobsplat {

enum class SceneKind { forward, surround };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& s);

// All refinement hyperparameters. phase_iters/total_iters of 0 resolve at run
// time from the training view count V: phases of 2V iterations, and a total of
// 24V (forward) or 16V (surround) — the nearest whole-round budgets above the
// published 22V / 14V schedules, which do not divide into mask/texture pairs.
struct RefineConfig {
    SceneKind scene_kind = SceneKind::forward;
    double delta = 0.5; // 0.8 for surround scenes
    int phase_iters = 0;
    int total_iters = 0;
    double mask_lr = 0.1;
    double lambda = 0.2;
    double eps = 1e-6;
    double seg_threshold = 0.5;
    double tiny_px = 1.0;
    bool optimize_geometry = true;
    int holdout_every = 0; // exclude every k-th view from training (0 = use all)
    int threads = 1;
    bool deterministic = false;
    uint64_t seed = 0;
    Vec3 background = Vec3::Zero();

    static RefineConfig defaults(SceneKind kind);
    static RefineConfig from_json_file(const std::filesystem::path& path);
    std::string to_json() const;

    int resolved_phase_iters(int train_views) const;
    int resolved_total_iters(int train_views) const;
    int rounds(int train_views) const;
    // Throws ValidationError naming the offending field.
    void validate(int train_views) const;

    RenderOptions render_options(bool want_backward) const {
        return {background, want_backward, threads, deterministic};
    }
};

std::vector<int> train_view_indices(int view_count, int holdout_every);
std::vector<int> heldout_view_indices(int view_count, int holdout_every);

struct PhaseRecord {
    int round = 0;
    std::string kind; // "mask" | "texture"
    int iterations = 0;
    double mean_loss = 0.0;
    int gaussians_after = 0;
    int splits = 0;
    int excluded_small = 0;
};

struct RefineMetrics {
    std::vector<PhaseRecord> phases;
    std::string to_json() const;
};

// One mask-label optimization phase: render/step over a seeded round-robin of
// covered training views, accumulating supervision statistics, then (when
// allowed) split the selected boundary set. `stats` always describes the cloud
// the labels were optimized on, i.e. the pre-split indexing.
struct MaskPhaseResult {
    GaussianCloud cloud;
    MaskStats stats;
    SplitReport split;
    double mean_loss = 0.0;
    int pre_split_count = 0;
};

MaskPhaseResult mask_phase(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                           const RefineConfig& cfg, uint64_t phase_seed, bool allow_split);

struct TexturePhaseResult {
    GaussianCloud cloud;
    double mean_loss = 0.0;
};

TexturePhaseResult texture_phase(GaussianCloud cloud, const Dataset& dataset,
                                 const RefineConfig& cfg, uint64_t phase_seed);

// Alternating mask/texture rounds, starting with the mask phase.
struct JointRefineResult {
    GaussianCloud cloud;
    MaskStats last_mask_stats;
    RefineMetrics metrics;
};

JointRefineResult joint_refine(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                               const RefineConfig& cfg);

// Deletes sub-pixel splats whose supervision stayed ambiguous. `stats` must
// come from a mask phase run without splitting on this exact cloud.
struct RobustnessResult {
    GaussianCloud cloud;
    std::vector<int> removed_indices; // indices into the input cloud
};

RobustnessResult robustness_pass(const GaussianCloud& cloud, const MaskStats& stats,
                                 const RefineConfig& cfg);

// Label thresholding and per-view subset mask rendering. Foreground requires
// m strictly above the threshold; the tie goes to background.
struct SegmentationResult {
    std::vector<int> foreground;
    std::vector<int> background;
    std::vector<int> removed_tiny; // filled by refine_pipeline
    std::vector<Mask> fg_masks;    // per view: foreground-subset alpha >= 0.5
    std::vector<Mask> bg_masks;
    std::vector<double> per_view_iou;
    double miou = std::numeric_limits<double>::quiet_NaN();
    double macc = std::numeric_limits<double>::quiet_NaN();
};

SegmentationResult segment(const GaussianCloud& cloud, const RefineConfig& cfg,
                           std::span<const Camera> cameras,
                           const std::vector<Mask>* gt_masks = nullptr);

// Sequential multi-object labeling: refine each object in turn on the evolving
// cloud, claim unassigned splats with m above threshold (first claim wins),
// then reset labels for the next object.
struct ClaimConflict {
    int gaussian_index; // in the cloud at claim time
    int existing_id;
    int attempted_id;
};

struct MultiObjectResult {
    GaussianCloud cloud;
    std::vector<ClaimConflict> conflicts;
    RefineMetrics metrics;
};

MultiObjectResult multi_object_refine(GaussianCloud cloud, const Dataset& dataset,
                                      std::span<const int> object_ids, const RefineConfig& cfg);

// Full single-object pipeline: joint refinement, an optional final no-split
// mask phase feeding the robustness removal, then segmentation. Segmentation
// index sets refer to the pre-removal cloud so the three sets partition it.
struct PipelineResult {
    GaussianCloud cloud; // post-removal
    SegmentationResult segmentation;
    RefineMetrics metrics;
    int removed_count = 0;
};

PipelineResult refine_pipeline(GaussianCloud cloud, const Dataset& dataset, int obj_id,
                               const RefineConfig& cfg, bool with_robustness = true);

// Mean PSNR of rendered views against dataset images.
double mean_view_psnr(const GaussianCloud& cloud, const Dataset& dataset,
                      std::span<const int> views, const RefineConfig& cfg);

} // namespace cobsplat
