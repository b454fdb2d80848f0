#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mot/geometry.hpp"

namespace mot {

/// One line of a MOT Challenge text file:
/// frame,id,x,y,w,h,conf,<-1,-1,-1>. Frames are 1-based.
struct MotRecord {
    int64_t frame = 1;
    int64_t id = -1;
    double x = 0, y = 0, w = 0, h = 0;
    double conf = 1.0;
    double extra1 = -1, extra2 = -1, extra3 = -1;

    Box box() const { return Box{x, y, w, h}; }
};

/// Parses comma-separated 10-field lines; errors carry the 1-based line
/// number and offending field.
std::vector<MotRecord> read_mot(std::istream& in);
std::vector<MotRecord> read_mot_file(const std::string& path);

/// Writes records sorted by (frame, id), shortest round-trip float format.
void write_mot(std::ostream& out, std::vector<MotRecord> records);
void write_mot_file(const std::string& path, std::vector<MotRecord> records);

struct FrameCounts {
    int64_t frame = 0;
    int64_t fp = 0, fn = 0, idsw = 0, matches = 0;
};

struct EvalReport {
    double mota = 0.0;
    double idf1 = 0.0;
    int64_t fp = 0, fn = 0, idsw = 0, frag = 0;
    int64_t mt = 0, ml = 0;           // mostly-tracked / mostly-lost identities
    int64_t gt_count = 0;             // total ground-truth boxes
    int64_t gt_tracks = 0;            // distinct ground-truth identities
    std::vector<FrameCounts> per_frame;
};

/// CLEAR-MOT accounting at the given IoU threshold. Frame-by-frame matching
/// keeps the previous frame's correspondences while they remain above the
/// threshold, then assigns the rest with the Hungarian algorithm; a kept
/// identity re-acquiring a different hypothesis than its last known one
/// counts as one identity switch.
EvalReport clearmot(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
                    double iou_thresh = 0.5);

/// ID-measure F1: a global bipartite assignment of ground-truth identities to
/// result identities maximizing per-frame IoU-consistent co-detections.
double idf1(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
            double iou_thresh = 0.5);

/// clearmot plus idf1 in one report.
EvalReport evaluate(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& res,
                    double iou_thresh = 0.5);

}  // namespace mot
