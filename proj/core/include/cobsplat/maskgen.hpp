#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cobsplat/dataset.hpp"

namespace cobsplat {

// Axis-aligned pixel rectangle, half-open: [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Text-prompted box proposal source. Raising the confidence never yields a
// strict superset of boxes for the same input.
class BoxDetector {
public:
    virtual ~BoxDetector() = default;
    virtual std::vector<Box> detect(const std::string& text, const Image& image,
                                    double confidence) = 0;
};

// Video object segmenter seeded by box prompts. Propagation visits frames in
// ascending index order; an empty mask is a valid per-frame output.
class VideoSegmenter {
public:
    virtual ~VideoSegmenter() = default;
    virtual void init(std::span<const Image> frames) = 0;
    virtual void add_box(int frame_index, std::span<const Box> boxes) = 0;
    // until < 0 propagates over the full sequence.
    virtual void propagate(int from_index, int until_index,
                           const std::function<void(int, const Mask&)>& sink) = 0;
};

struct MaskGenConfig {
    int prompt_frame_index = 0;
    std::string text;
    double c_low = 0.3;
    double c_high = 0.7;

    void validate(int frame_count) const;
};

struct FrameRange {
    int first;
    int last; // inclusive
};

// Maximal contiguous run of invalid frames starting at `key` (valid[key] must
// be 0).
FrameRange find_max_sub(std::span<const uint8_t> valid, int key);

struct MaskGenResult {
    std::map<int, Mask> segments;
    std::vector<uint8_t> valid;
    std::vector<int> uncovered; // frames left maskless after both stages
};

// Coarse pass seeded at the prompt frame with low-confidence boxes, then a
// fine pass that re-prompts each remaining invalid subsequence at high
// confidence. A frame that is already valid is never regressed.
MaskGenResult two_stage_generate(BoxDetector& detector, VideoSegmenter& segmenter,
                                 std::span<const Image> frames, const MaskGenConfig& cfg);

// Installs generated masks for one object: missing or invalid frames become
// all-zero masks with a zero coverage flag so refinement skips those views.
Dataset masks_to_dataset(const MaskGenResult& result, Dataset dataset, int obj_id);

// --- Scripted deterministic mocks -----------------------------------------

// Frames carry their index in the top-left pixel so mocks can identify them
// without aliasing assumptions.
std::vector<Image> make_mock_frames(int count, int width, int height);
int mock_frame_index(const Image& frame);

struct MockScript {
    int frames = 0;
    int width = 0;
    int height = 0;
    MaskGenConfig config;
    // Per frame: scored boxes; detect() returns those with score >= confidence.
    std::map<int, std::vector<std::pair<double, Box>>> detections;
    // Tracking state changes during propagation: a break loses the object
    // until re-prompted (or a scripted reacquire).
    std::set<int> break_at;
    std::set<int> reacquire_at;

    static MockScript from_json_file(const std::filesystem::path& path);
};

class MockBoxDetector final : public BoxDetector {
public:
    explicit MockBoxDetector(const MockScript& script) : script_(script) {}
    std::vector<Box> detect(const std::string& text, const Image& image,
                            double confidence) override;

private:
    const MockScript& script_;
};

class MockVideoSegmenter final : public VideoSegmenter {
public:
    explicit MockVideoSegmenter(const MockScript& script) : script_(script) {}
    void init(std::span<const Image> frames) override;
    void add_box(int frame_index, std::span<const Box> boxes) override;
    void propagate(int from_index, int until_index,
                   const std::function<void(int, const Mask&)>& sink) override;

private:
    const MockScript& script_;
    int frame_count_ = 0;
    std::map<int, std::vector<Box>> anchors_;
};

} // namespace cobsplat
