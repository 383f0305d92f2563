#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <vector>

#include "wsol/box.hpp"
#include "wsol/data.hpp"
#include "wsol/tensor.hpp"

namespace wsol {

/// Intersection over union with pixel-area semantics; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Binarizes the heatmap at theta times its maximum and returns the tight
/// bounding box of the largest 4-connected component (ties to the component
/// whose first pixel comes earliest in raster order).
///
/// The heatmap must be [1,S,S] with a positive maximum; an empty
/// binarization (theta > 1) is a contract error.
Box extract_box(const Tensor& heatmap, double theta);

/// Per-sample classification scores and localization heatmap. The heatmap
/// is the ground-truth-class channel at image resolution.
struct Prediction {
    Tensor probs;    // [C]
    Tensor heatmap;  // [1,S,S]
};

struct SweepPoint {
    double threshold = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    double gt_known = 0.0;
};

struct LocalizationReport {
    double threshold = 0.5;
    double top1 = 0.0;      // correct class and IoU above the threshold
    double top5 = 0.0;      // label within the 5 best classes and IoU above
    double gt_known = 0.0;  // IoU above the threshold alone
    double miou = 0.0;      // per-class mean IoU averaged over classes
    std::vector<SweepPoint> sweep;
    std::map<int, std::vector<double>> per_class_iou;
};

/// Computes the four localization metrics at the given IoU threshold
/// (strictly greater-than) plus the 0.1..0.9 threshold sweep. Every sample
/// must carry a ground-truth box.
LocalizationReport evaluate(const std::vector<Sample>& samples, const std::vector<Prediction>& predictions,
                            double iou_threshold = 0.5, double theta = 0.45);

/// Human-readable table.
void print_report(const LocalizationReport& report, std::ostream& out);

/// Line-oriented machine-readable form: "metric threshold value" per line.
void write_report(const LocalizationReport& report, const std::filesystem::path& path);

}  // namespace wsol
