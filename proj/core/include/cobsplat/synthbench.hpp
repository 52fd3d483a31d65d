#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cobsplat/refine.hpp"

namespace cobsplat {

// Synthetic scene recipe. The generator builds a fine reference cloud with
// known per-splat object membership, renders the dataset images and
// ground-truth masks from it, and returns a coarse training cloud that
// approximates the same scene the way a reconstruction would — including,
// at overlap > 0, deliberately large splats straddling the object interface.
struct SceneSpec {
    std::string layout = "two-blob-interlock"; // | "ring-and-core" | "occluder-stack"
    int gaussians = 400;  // approximate training-cloud size
    int views = 12;
    int image_size = 64;
    bool ring_cameras = false; // default: forward grid facing the scene
    double ring_radius = 3.2;
    double ring_elevation_deg = 20.0;
    double overlap = 1.0; // boundary-overlap factor; 0 = no straddlers
    uint64_t seed = 0;

    static SceneSpec from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
    void validate() const;
};

struct GeneratedScene {
    GaussianCloud cloud;            // training cloud
    Dataset dataset;                // images + GT masks from the reference cloud
    std::vector<int> membership;    // true object id per training splat
    std::vector<int> straddlers;    // splats deliberately crossing the interface
    std::vector<int> interiors;     // splats guaranteed clear of every mask edge
    std::vector<int> object_ids;    // objects with mask sets
};

GeneratedScene generate_scene(const SceneSpec& spec);

// Per-view independent boundary corruption. Interior pixels farther than
// 2*jitter_px from the boundary are untouched by the jitter resampling.
struct CorruptionSpec {
    double jitter_px = 0.0;
    int dilate_px = 0;
    int erode_px = 0;
    double flip_prob = 0.0;
    uint64_t seed = 0;

    bool is_identity() const {
        return jitter_px == 0.0 && dilate_px == 0 && erode_px == 0 && flip_prob == 0.0;
    }
    static CorruptionSpec from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
};

std::vector<Mask> corrupt_masks(const std::vector<Mask>& masks, const CorruptionSpec& cspec);

// Ablation variants: label-only optimization without and with boundary
// splitting, the full alternating schedule, and the alternating schedule plus
// the tiny-ambiguous-splat removal pass.
enum class Variant { baseline, bags, bags_bgtr, bags_bgtr_raem };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct VariantResult {
    std::string name;
    double miou = 0.0;
    double macc = 0.0;
    double heldout_psnr = 0.0;
    double train_psnr = 0.0;
    int gaussians = 0;
    int splits = 0;
    int removed = 0;
    double wall_s = 0.0;
};

// Runs one variant on copies of the inputs. Training uses the masks found in
// `dataset` (possibly corrupted); segmentation quality is always measured
// against `clean_masks`.
VariantResult run_variant(const GaussianCloud& cloud, const Dataset& dataset,
                          const std::vector<Mask>& clean_masks, int obj_id,
                          const RefineConfig& cfg, Variant variant);

struct BenchReport {
    std::string scene_json;
    std::string corruption_json;
    std::string config_json;
    std::vector<VariantResult> rows;

    // report.json holds only deterministic fields; wall times go to the CSV.
    std::string to_json() const;
    std::string to_csv() const;
    void write(const std::filesystem::path& out_dir) const;
};

BenchReport run_benchmark(const SceneSpec& spec, const CorruptionSpec& cspec,
                          const RefineConfig& cfg, std::span<const Variant> variants);

} // namespace cobsplat
