#include "cobsplat/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cobsplat {

using nlohmann::json;

void MaskGenConfig::validate(int frame_count) const {
    if (prompt_frame_index < 0 || prompt_frame_index >= frame_count)
        throw ValidationError("prompt_frame_index " + std::to_string(prompt_frame_index) +
                              " out of range for " + std::to_string(frame_count) + " frames");
    if (!(c_low >= 0.0) || !(c_low < c_high) || !(c_high <= 1.0))
        throw ValidationError("confidences must satisfy 0 <= c_low < c_high <= 1");
}

FrameRange find_max_sub(std::span<const uint8_t> valid, int key) {
    if (key < 0 || key >= static_cast<int>(valid.size()))
        throw ContractViolation("find_max_sub: key out of range");
    if (valid[key] != 0) throw ContractViolation("find_max_sub: key frame is already valid");
    int last = key;
    while (last + 1 < static_cast<int>(valid.size()) && valid[last + 1] == 0) ++last;
    return {key, last};
}

MaskGenResult two_stage_generate(BoxDetector& detector, VideoSegmenter& segmenter,
                                 std::span<const Image> frames, const MaskGenConfig& cfg) {
    if (frames.empty()) throw ValidationError("two_stage_generate: no frames");
    cfg.validate(static_cast<int>(frames.size()));

    MaskGenResult result;
    result.valid.assign(frames.size(), 0);

    // A frame is only ever written forward: once by stage 1, and at most once
    // more by a successful stage-2 pass. Valid frames never regress.
    const auto assign = [&](int frame, const Mask& mask) {
        const bool nonempty = mask.count() > 0;
        if (nonempty) {
            result.segments[frame] = mask;
            result.valid[frame] = 1;
        } else if (result.segments.find(frame) == result.segments.end()) {
            result.segments[frame] = mask;
        }
    };

    // Stage 1: coarse full-sequence propagation from the prompt frame.
    const std::vector<Box> seed_boxes =
        detector.detect(cfg.text, frames[cfg.prompt_frame_index], cfg.c_low);
    if (seed_boxes.empty())
        throw ValidationError("no initial prompt: detection at confidence " +
                              std::to_string(cfg.c_low) + " found nothing on frame " +
                              std::to_string(cfg.prompt_frame_index));
    segmenter.init(frames);
    segmenter.add_box(cfg.prompt_frame_index, seed_boxes);
    segmenter.propagate(cfg.prompt_frame_index, -1,
                        [&](int frame, const Mask& mask) { assign(frame, mask); });

    // Stage 2: re-prompt each surviving invalid subsequence at high confidence.
    for (int key = 0; key < static_cast<int>(frames.size()); ++key) {
        if (result.valid[key] != 0) continue;
        const std::vector<Box> boxes = detector.detect(cfg.text, frames[key], cfg.c_high);
        if (boxes.empty()) continue;
        segmenter.add_box(key, boxes);
        const FrameRange range = find_max_sub(result.valid, key);
        segmenter.propagate(range.first, range.last,
                            [&](int frame, const Mask& mask) { assign(frame, mask); });
    }

    for (int f = 0; f < static_cast<int>(frames.size()); ++f)
        if (result.valid[f] == 0) result.uncovered.push_back(f);
    return result;
}

Dataset masks_to_dataset(const MaskGenResult& result, Dataset dataset, int obj_id) {
    const int views = dataset.view_count();
    std::vector<Mask> masks;
    std::vector<uint8_t> coverage(views, 0);
    masks.reserve(views);
    for (int v = 0; v < views; ++v) {
        const Camera& cam = dataset.cameras[v];
        const auto it = result.segments.find(v);
        const bool valid = v < static_cast<int>(result.valid.size()) && result.valid[v] != 0;
        if (it != result.segments.end() && valid) {
            if (it->second.width != cam.width || it->second.height != cam.height)
                throw ValidationError("view " + std::to_string(v) + ": mask " +
                                      std::to_string(it->second.width) + "x" +
                                      std::to_string(it->second.height) + " vs camera " +
                                      std::to_string(cam.width) + "x" +
                                      std::to_string(cam.height));
            masks.push_back(it->second);
            coverage[v] = 1;
        } else {
            masks.emplace_back(cam.width, cam.height, 0);
        }
    }
    dataset.mask_sets[obj_id] = std::move(masks);
    dataset.mask_coverage[obj_id] = std::move(coverage);
    return dataset;
}

// --- Mocks ------------------------------------------------------------------

std::vector<Image> make_mock_frames(int count, int width, int height) {
    std::vector<Image> frames;
    frames.reserve(count);
    for (int f = 0; f < count; ++f) {
        Image img(width, height, 3);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    img.at(r, c, ch) = 0.25 + 0.5 * (r + c) / double(width + height);
        img.data[0] = f / 255.0; // frame index stamp
        frames.push_back(std::move(img));
    }
    return frames;
}

int mock_frame_index(const Image& frame) {
    return static_cast<int>(std::lround(frame.data[0] * 255.0));
}

MockScript MockScript::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open mock script: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    MockScript s;
    s.frames = doc.at("frames").get<int>();
    s.width = doc.value("width", 32);
    s.height = doc.value("height", 32);
    if (doc.contains("config")) {
        const json& c = doc["config"];
        s.config.prompt_frame_index = c.value("prompt_frame_index", 0);
        s.config.text = c.value("text", "object");
        s.config.c_low = c.value("c_low", 0.3);
        s.config.c_high = c.value("c_high", 0.7);
    }
    if (doc.contains("detections")) {
        for (const auto& [frame_str, list] : doc["detections"].items()) {
            const int frame = std::stoi(frame_str);
            for (const json& d : list) {
                const auto& b = d.at("box");
                s.detections[frame].push_back(
                    {d.at("score").get<double>(),
                     Box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()}});
            }
        }
    }
    if (doc.contains("break_at"))
        for (const json& f : doc["break_at"]) s.break_at.insert(f.get<int>());
    if (doc.contains("reacquire_at"))
        for (const json& f : doc["reacquire_at"]) s.reacquire_at.insert(f.get<int>());
    return s;
}

std::vector<Box> MockBoxDetector::detect(const std::string& /*text*/, const Image& image,
                                         double confidence) {
    const int frame = mock_frame_index(image);
    std::vector<Box> out;
    const auto it = script_.detections.find(frame);
    if (it == script_.detections.end()) return out;
    for (const auto& [score, box] : it->second)
        if (score >= confidence) out.push_back(box);
    return out;
}

void MockVideoSegmenter::init(std::span<const Image> frames) {
    frame_count_ = static_cast<int>(frames.size());
    anchors_.clear();
}

void MockVideoSegmenter::add_box(int frame_index, std::span<const Box> boxes) {
    anchors_[frame_index] = std::vector<Box>(boxes.begin(), boxes.end());
}

void MockVideoSegmenter::propagate(int from_index, int until_index,
                                   const std::function<void(int, const Mask&)>& sink) {
    const int lo = until_index < 0 ? 0 : from_index;
    const int hi = until_index < 0 ? frame_count_ - 1 : until_index;

    // Memory model: tracking holds from an anchored frame onward, breaks at
    // scripted occlusions, and resumes only at an anchor or a scripted
    // reacquire point.
    bool tracking = false;
    const std::vector<Box>* boxes = nullptr;
    for (int f = lo; f <= hi; ++f) {
        const auto a = anchors_.find(f);
        if (a != anchors_.end() && !a->second.empty()) {
            tracking = true;
            boxes = &a->second;
        } else if (script_.break_at.count(f)) {
            tracking = false;
        } else if (script_.reacquire_at.count(f)) {
            tracking = true;
        }

        Mask mask(script_.width, script_.height, 0);
        if (tracking && boxes) {
            for (const Box& b : *boxes)
                for (int r = std::max(0, b.y0); r < std::min(script_.height, b.y1); ++r)
                    for (int c = std::max(0, b.x0); c < std::min(script_.width, b.x1); ++c)
                        mask.at(r, c) = 1;
        }
        sink(f, mask);
    }
}

} // namespace cobsplat
