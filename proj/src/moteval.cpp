#include "mot/moteval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mot/assoc.hpp"

namespace mot {

namespace {

double parse_double(const std::string& field, int64_t line, int col) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw std::runtime_error("mot parse error at line " + std::to_string(line) +
                                 ", field " + std::to_string(col) + ": '" + field + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace

std::vector<MotRecord> read_mot(std::istream& in) {
    std::vector<MotRecord> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        fields.push_back(cur);
        if (fields.size() != 10)
            throw std::runtime_error("mot parse error at line " + std::to_string(lineno) +
                                     ": expected 10 fields, got " +
                                     std::to_string(fields.size()));
        MotRecord r;
        r.frame = static_cast<int64_t>(parse_double(fields[0], lineno, 1));
        r.id = static_cast<int64_t>(parse_double(fields[1], lineno, 2));
        r.x = parse_double(fields[2], lineno, 3);
        r.y = parse_double(fields[3], lineno, 4);
        r.w = parse_double(fields[4], lineno, 5);
        r.h = parse_double(fields[5], lineno, 6);
        r.conf = parse_double(fields[6], lineno, 7);
        r.extra1 = parse_double(fields[7], lineno, 8);
        r.extra2 = parse_double(fields[8], lineno, 9);
        r.extra3 = parse_double(fields[9], lineno, 10);
        if (r.frame < 1)
            throw std::runtime_error("mot parse error at line " + std::to_string(lineno) +
                                     ": frame must be >= 1");
        if (r.w <= 0 || r.h <= 0)
            throw std::runtime_error("mot parse error at line " + std::to_string(lineno) +
                                     ": box size must be positive");
        out.push_back(r);
    }
    return out;
}

std::vector<MotRecord> read_mot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_mot(in);
}

void write_mot(std::ostream& out, std::vector<MotRecord> records) {
    std::stable_sort(records.begin(), records.end(), [](const MotRecord& a, const MotRecord& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
    });
    for (const auto& r : records) {
        out << r.frame << ',' << r.id << ',' << format_double(r.x) << ',' << format_double(r.y)
            << ',' << format_double(r.w) << ',' << format_double(r.h) << ','
            << format_double(r.conf) << ',' << format_double(r.extra1) << ','
            << format_double(r.extra2) << ',' << format_double(r.extra3) << '\n';
    }
}

void write_mot_file(const std::string& path, std::vector<MotRecord> records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    write_mot(out, std::move(records));
}

namespace {

using FrameMap = std::map<int64_t, std::vector<const MotRecord*>>;

FrameMap by_frame(const std::vector<MotRecord>& recs) {
    FrameMap m;
    for (const auto& r : recs) m[r.frame].push_back(&r);
    return m;
}

}  // namespace

EvalReport clearmot(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
                    double iou_thresh) {
    EvalReport rep;
    rep.gt_count = static_cast<int64_t>(gt.size());

    FrameMap gtf = by_frame(gt), resf = by_frame(res);
    std::set<int64_t> frames;
    for (const auto& [f, _] : gtf) frames.insert(f);
    for (const auto& [f, _] : resf) frames.insert(f);

    std::map<int64_t, int64_t> last_match;   // gt id -> last associated res id
    std::map<int64_t, int64_t> prev_frame_match;  // correspondences alive last frame
    std::map<int64_t, int64_t> gt_present, gt_covered;  // per-identity frame counts
    std::map<int64_t, bool> was_tracked, tracked_prev;

    static const std::vector<const MotRecord*> kNone;
    for (int64_t f : frames) {
        auto git = gtf.find(f);
        auto rit = resf.find(f);
        const auto& G = git == gtf.end() ? kNone : git->second;
        const auto& H = rit == resf.end() ? kNone : rit->second;

        std::map<int64_t, const MotRecord*> gid, hid;
        for (auto* g : G) gid[g->id] = g;
        for (auto* h : H) hid[h->id] = h;

        std::map<int64_t, int64_t> matches;  // gt id -> res id this frame
        std::set<int64_t> used_h;

        // persistence: keep last frame's pairs that still overlap
        for (auto [g, h] : prev_frame_match) {
            if (!gid.count(g) || !hid.count(h)) continue;
            if (iou(gid[g]->box(), hid[h]->box()) >= iou_thresh) {
                matches[g] = h;
                used_h.insert(h);
            }
        }

        // Hungarian over the rest, gated at the IoU threshold
        std::vector<const MotRecord*> gfree, hfree;
        for (auto* g : G)
            if (!matches.count(g->id)) gfree.push_back(g);
        for (auto* h : H)
            if (!used_h.count(h->id)) hfree.push_back(h);
        if (!gfree.empty() && !hfree.empty()) {
            Matrix cost(gfree.size(), std::vector<double>(hfree.size(), kPadCost));
            for (size_t i = 0; i < gfree.size(); ++i)
                for (size_t j = 0; j < hfree.size(); ++j) {
                    double v = iou(gfree[i]->box(), hfree[j]->box());
                    if (v >= iou_thresh) cost[i][j] = 1.0 - v;
                }
            Matching m = hungarian(cost);
            for (auto [i, j] : m.pairs) {
                if (cost[i][j] >= kPadCost) continue;  // gated pair, not a real match
                matches[gfree[i]->id] = hfree[j]->id;
                used_h.insert(hfree[j]->id);
            }
        }

        FrameCounts fc;
        fc.frame = f;
        fc.matches = static_cast<int64_t>(matches.size());
        fc.fp = static_cast<int64_t>(H.size()) - fc.matches;
        fc.fn = static_cast<int64_t>(G.size()) - fc.matches;
        for (auto [g, h] : matches) {
            auto it = last_match.find(g);
            if (it != last_match.end() && it->second != h) ++fc.idsw;
            last_match[g] = h;
        }
        rep.fp += fc.fp;
        rep.fn += fc.fn;
        rep.idsw += fc.idsw;
        rep.per_frame.push_back(fc);

        // fragmentation + coverage accounting
        for (auto* g : G) {
            bool tracked = matches.count(g->id) > 0;
            ++gt_present[g->id];
            if (tracked) {
                ++gt_covered[g->id];
                if (was_tracked[g->id] && !tracked_prev[g->id]) ++rep.frag;
                was_tracked[g->id] = true;
            }
            tracked_prev[g->id] = tracked;
        }
        prev_frame_match = matches;
    }

    rep.gt_tracks = static_cast<int64_t>(gt_present.size());
    for (auto [id, present] : gt_present) {
        double cover = static_cast<double>(gt_covered[id]) / static_cast<double>(present);
        if (cover >= 0.8) ++rep.mt;
        if (cover <= 0.2) ++rep.ml;
    }
    rep.mota = rep.gt_count > 0
                   ? 1.0 - static_cast<double>(rep.fp + rep.fn + rep.idsw) /
                               static_cast<double>(rep.gt_count)
                   : 1.0;
    return rep;
}

double idf1(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
            double iou_thresh) {
    if (gt.empty() && res.empty()) return 1.0;
    if (gt.empty() || res.empty()) return 0.0;

    std::vector<int64_t> gids, hids;
    std::map<int64_t, size_t> gidx, hidx;
    for (const auto& r : gt)
        if (!gidx.count(r.id)) {
            gidx[r.id] = gids.size();
            gids.push_back(r.id);
        }
    for (const auto& r : res)
        if (!hidx.count(r.id)) {
            hidx[r.id] = hids.size();
            hids.push_back(r.id);
        }

    // co-detection counts per (gt identity, result identity)
    std::vector<std::vector<int64_t>> overlap(gids.size(),
                                              std::vector<int64_t>(hids.size(), 0));
    FrameMap gtf = by_frame(gt), resf = by_frame(res);
    for (auto& [f, G] : gtf) {
        auto it = resf.find(f);
        if (it == resf.end()) continue;
        for (auto* g : G)
            for (auto* h : it->second)
                if (iou(g->box(), h->box()) >= iou_thresh)
                    ++overlap[gidx[g->id]][hidx[h->id]];
    }

    Matrix cost(gids.size(), std::vector<double>(hids.size()));
    for (size_t i = 0; i < gids.size(); ++i)
        for (size_t j = 0; j < hids.size(); ++j)
            cost[i][j] = -static_cast<double>(overlap[i][j]);
    Matching m = hungarian(cost);
    int64_t idtp = 0;
    for (auto [i, j] : m.pairs) idtp += overlap[i][j];

    int64_t idfp = static_cast<int64_t>(res.size()) - idtp;
    int64_t idfn = static_cast<int64_t>(gt.size()) - idtp;
    return 2.0 * static_cast<double>(idtp) /
           static_cast<double>(2 * idtp + idfp + idfn);
}

EvalReport evaluate(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
                    double iou_thresh) {
    EvalReport rep = clearmot(gt, res, iou_thresh);
    rep.idf1 = idf1(gt, res, iou_thresh);
    return rep;
}

}  // namespace mot
