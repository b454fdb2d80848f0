#include "mot/scenario_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "mot/moteval.hpp"

namespace mot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json scenario_config_json(const ScenarioConfig& s) {
    return json{{"image_w", s.image_w},       {"image_h", s.image_h},
                {"targets", s.targets},       {"frames", s.frames},
                {"min_size", s.min_size},     {"max_size", s.max_size},
                {"max_speed", s.max_speed},   {"wobble_amp", s.wobble_amp},
                {"occlusion_events", s.occlusion_events},
                {"occlusion_min", s.occlusion_min},
                {"occlusion_max", s.occlusion_max},
                {"det_noise", s.det_noise},   {"miss_prob", s.miss_prob},
                {"fp_rate", s.fp_rate},       {"overlap_iou", s.overlap_iou},
                {"signature_dim", s.signature_dim},
                {"sig_noise", s.sig_noise},   {"bg_noise", s.bg_noise},
                {"seed", s.seed}};
}

ScenarioConfig scenario_config_from_json(const json& j) {
    ScenarioConfig s;
    s.image_w = j.at("image_w");
    s.image_h = j.at("image_h");
    s.targets = j.at("targets");
    s.frames = j.at("frames");
    s.min_size = j.at("min_size");
    s.max_size = j.at("max_size");
    s.max_speed = j.at("max_speed");
    s.wobble_amp = j.at("wobble_amp");
    s.occlusion_events = j.at("occlusion_events");
    s.occlusion_min = j.at("occlusion_min");
    s.occlusion_max = j.at("occlusion_max");
    s.det_noise = j.at("det_noise");
    s.miss_prob = j.at("miss_prob");
    s.fp_rate = j.at("fp_rate");
    s.overlap_iou = j.at("overlap_iou");
    s.signature_dim = j.at("signature_dim");
    s.sig_noise = j.at("sig_noise");
    s.bg_noise = j.at("bg_noise");
    s.seed = j.at("seed");
    return s;
}

}  // namespace

void write_scenario(const std::string& dir, const GroundTruth& gt) {
    fs::create_directories(dir);
    const auto& cfg = gt.cfg;

    std::vector<MotRecord> gt_records;
    for (size_t i = 0; i < gt.targets.size(); ++i) {
        const auto& t = gt.targets[i];
        for (int64_t f = 0; f < cfg.frames; ++f) {
            if (!t.visible[f]) continue;
            MotRecord r;
            r.frame = f + 1;  // MOT files are 1-based
            r.id = gt.identity(static_cast<int64_t>(i));
            r.x = t.boxes[f].x;
            r.y = t.boxes[f].y;
            r.w = t.boxes[f].w;
            r.h = t.boxes[f].h;
            r.conf = 1.0;
            gt_records.push_back(r);
        }
    }
    write_mot_file((fs::path(dir) / scenario_files::kGroundTruth).string(),
                   std::move(gt_records));

    std::vector<MotRecord> det_records;
    for (int64_t f = 0; f < cfg.frames; ++f) {
        for (const auto& d : corrupt_detections(gt, f)) {
            MotRecord r;
            r.frame = f + 1;
            r.id = -1;
            r.x = d.box.x;
            r.y = d.box.y;
            r.w = d.box.w;
            r.h = d.box.h;
            r.conf = d.score;
            det_records.push_back(r);
        }
    }
    write_mot_file((fs::path(dir) / scenario_files::kDetections).string(),
                   std::move(det_records));

    json sig = json::object();
    for (size_t i = 0; i < gt.targets.size(); ++i)
        sig[std::to_string(gt.identity(static_cast<int64_t>(i)))] = gt.targets[i].signature;
    std::ofstream sf(fs::path(dir) / scenario_files::kSignatures, std::ios::trunc);
    sf << sig.dump(2) << '\n';

    json meta;
    meta["config"] = scenario_config_json(cfg);
    json events = json::array();
    for (const auto& e : gt.events)
        events.push_back({{"target", e.target}, {"start", e.start}, {"end", e.end}});
    meta["occlusion_events"] = events;
    std::ofstream mf(fs::path(dir) / scenario_files::kScenario, std::ios::trunc);
    mf << meta.dump(2) << '\n';
}

GroundTruth load_scenario(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / scenario_files::kScenario);
    if (!mf) throw std::runtime_error("scenario: cannot open " + dir + "/scenario.json");
    json meta = json::parse(mf);

    GroundTruth gt;
    gt.cfg = scenario_config_from_json(meta.at("config"));
    for (const auto& e : meta.at("occlusion_events"))
        gt.events.push_back({e.at("target"), e.at("start"), e.at("end")});

    std::ifstream sf(fs::path(dir) / scenario_files::kSignatures);
    if (!sf) throw std::runtime_error("scenario: cannot open " + dir + "/signatures.json");
    json sig = json::parse(sf);

    gt.targets.resize(gt.cfg.targets);
    for (int64_t i = 0; i < gt.cfg.targets; ++i) {
        auto& t = gt.targets[i];
        t.boxes.assign(gt.cfg.frames, Box{});
        t.visible.assign(gt.cfg.frames, false);
        auto key = std::to_string(i + 1);
        if (!sig.contains(key))
            throw std::runtime_error("scenario: signature missing for identity " + key);
        t.signature = sig.at(key).get<std::vector<double>>();
    }

    auto records = read_mot_file((fs::path(dir) / scenario_files::kGroundTruth).string());
    for (const auto& r : records) {
        if (r.id < 1 || r.id > gt.cfg.targets)
            throw std::runtime_error("scenario: gt identity out of range: " +
                                     std::to_string(r.id));
        if (r.frame > gt.cfg.frames)
            throw std::runtime_error("scenario: gt frame out of range");
        auto& t = gt.targets[r.id - 1];
        t.boxes[r.frame - 1] = r.box();
        t.visible[r.frame - 1] = true;
    }
    return gt;
}

std::vector<std::vector<Detection>> load_detections(const std::string& dir, int64_t frames) {
    auto records = read_mot_file((fs::path(dir) / scenario_files::kDetections).string());
    std::vector<std::vector<Detection>> out(frames);
    for (const auto& r : records) {
        if (r.frame > frames) throw std::runtime_error("detections: frame out of range");
        out[r.frame - 1].push_back({r.box(), r.conf, r.id});
    }
    for (auto& v : out)
        std::stable_sort(v.begin(), v.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return out;
}

namespace {
constexpr char kPyrMagic[8] = {'M', 'O', 'T', 'P', 'Y', 'R', '1', '\n'};

template <typename T>
void wr(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("pyramid file: truncated");
    return v;
}
}  // namespace

void write_pyramids(const std::string& path, const GroundTruth& gt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(kPyrMagic, sizeof(kPyrMagic));
    wr<int64_t>(os, gt.cfg.frames);
    wr<int64_t>(os, kPyramidLevels);
    for (int64_t f = 0; f < gt.cfg.frames; ++f) {
        FeaturePyramid p = render_pyramid(gt, f);
        for (int k = 0; k < kPyramidLevels; ++k) {
            const auto& t = p.levels[k];
            wr<int64_t>(os, t.shape()[0]);
            wr<int64_t>(os, t.shape()[1]);
            wr<int64_t>(os, t.shape()[2]);
            os.write(reinterpret_cast<const char*>(t.data().data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
    }
}

std::vector<FeaturePyramid> read_pyramids(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kPyrMagic, 8) != 0)
        throw std::runtime_error("pyramid file: bad header");
    int64_t frames = rd<int64_t>(is);
    int64_t levels = rd<int64_t>(is);
    if (levels != kPyramidLevels) throw std::runtime_error("pyramid file: level count mismatch");
    std::vector<FeaturePyramid> out;
    for (int64_t f = 0; f < frames; ++f) {
        FeaturePyramid p;
        p.frame_index = f;
        for (int k = 0; k < kPyramidLevels; ++k) {
            int64_t c = rd<int64_t>(is), h = rd<int64_t>(is), w = rd<int64_t>(is);
            std::vector<double> data(c * h * w);
            is.read(reinterpret_cast<char*>(data.data()),
                    static_cast<std::streamsize>(data.size() * sizeof(double)));
            if (!is) throw std::runtime_error("pyramid file: truncated payload");
            p.levels[k] = Tensor::from_data({c, h, w}, std::move(data));
            p.strides[k] = 8.0 * static_cast<double>(int64_t{1} << k);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace mot
