#include "wsol/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace wsol {

double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw ContractError("iou: boxes must be non-empty");
    const int ix0 = std::max(a.x0, b.x0);
    const int iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1);
    const int iy1 = std::min(a.y1, b.y1);
    if (ix0 >= ix1 || iy0 >= iy1) return 0.0;
    const long long inter = static_cast<long long>(ix1 - ix0) * (iy1 - iy0);
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Box extract_box(const Tensor& heatmap, double theta) {
    if (heatmap.rank() != 3 || heatmap.dim(0) != 1) throw DimensionError("extract_box: heatmap must be [1,S,S]");
    const int H = heatmap.dim(1), W = heatmap.dim(2);
    const double* p = heatmap.data();
    double max_value = p[0];
    for (std::size_t i = 1; i < heatmap.size(); ++i) max_value = std::max(max_value, p[i]);
    if (max_value <= 0.0) throw ContractError("extract_box: heatmap has no positive values");
    const double cut = theta * max_value;

    std::vector<std::uint8_t> on(heatmap.size());
    bool any = false;
    for (std::size_t i = 0; i < heatmap.size(); ++i) {
        on[i] = p[i] >= cut;
        any = any || on[i];
    }
    if (!any) throw ContractError("extract_box: binarization is empty (theta too large)");

    // Raster-order labeling: the first component found with the maximal
    // size wins, which is exactly the smallest-first-pixel tie rule.
    std::vector<std::uint8_t> seen(heatmap.size(), 0);
    std::vector<int> stack;
    Box best{};
    int best_size = 0;
    for (int start = 0; start < H * W; ++start) {
        if (!on[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
        int size = 0;
        Box box{W, H, 0, 0};
        stack.assign(1, start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const int cell = stack.back();
            stack.pop_back();
            const int y = cell / W, x = cell % W;
            ++size;
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x + 1);
            box.y1 = std::max(box.y1, y + 1);
            const int neighbors[4] = {cell - W, cell + W, cell - 1, cell + 1};
            const bool ok[4] = {y > 0, y + 1 < H, x > 0, x + 1 < W};
            for (int i = 0; i < 4; ++i) {
                if (ok[i] && on[static_cast<std::size_t>(neighbors[i])] && !seen[static_cast<std::size_t>(neighbors[i])]) {
                    seen[static_cast<std::size_t>(neighbors[i])] = 1;
                    stack.push_back(neighbors[i]);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best = box;
        }
    }
    return best;
}

namespace {

struct SampleOutcome {
    double iou_value = 0.0;
    bool top1_class = false;
    bool top5_class = false;
    int label = 0;
};

SweepPoint aggregate(const std::vector<SampleOutcome>& outcomes, double threshold) {
    SweepPoint point;
    point.threshold = threshold;
    if (outcomes.empty()) return point;
    int top1 = 0, top5 = 0, known = 0;
    for (const SampleOutcome& o : outcomes) {
        const bool localized = o.iou_value > threshold;
        known += localized;
        top1 += localized && o.top1_class;
        top5 += localized && o.top5_class;
    }
    const double n = static_cast<double>(outcomes.size());
    point.top1 = top1 / n;
    point.top5 = top5 / n;
    point.gt_known = known / n;
    return point;
}

}  // namespace

LocalizationReport evaluate(const std::vector<Sample>& samples, const std::vector<Prediction>& predictions,
                            double iou_threshold, double theta) {
    if (samples.size() != predictions.size()) {
        throw ContractError("evaluate: one prediction per sample required");
    }

    std::vector<SampleOutcome> outcomes;
    outcomes.reserve(samples.size());
    LocalizationReport report;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        if (!sample.gt_box) throw ContractError("evaluate: sample " + std::to_string(i) + " has no ground-truth box");

        const Prediction& pred = predictions[i];
        SampleOutcome outcome;
        outcome.label = sample.label;
        outcome.iou_value = iou(extract_box(pred.heatmap, theta), *sample.gt_box);

        // Rank classes by score, ties to the smaller index.
        const int C = static_cast<int>(pred.probs.size());
        std::vector<int> order(static_cast<std::size_t>(C));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return pred.probs.data()[a] > pred.probs.data()[b]; });
        outcome.top1_class = order[0] == sample.label;
        for (int r = 0; r < std::min(5, C); ++r) outcome.top5_class |= order[static_cast<std::size_t>(r)] == sample.label;

        report.per_class_iou[sample.label].push_back(outcome.iou_value);
        outcomes.push_back(outcome);
    }

    report.threshold = iou_threshold;
    const SweepPoint at = aggregate(outcomes, iou_threshold);
    report.top1 = at.top1;
    report.top5 = at.top5;
    report.gt_known = at.gt_known;

    double class_mean_sum = 0.0;
    for (const auto& [label, values] : report.per_class_iou) {
        class_mean_sum += std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    report.miou = report.per_class_iou.empty() ? 0.0 : class_mean_sum / static_cast<double>(report.per_class_iou.size());

    for (int i = 1; i <= 9; ++i) report.sweep.push_back(aggregate(outcomes, i / 10.0));
    return report;
}

void print_report(const LocalizationReport& report, std::ostream& out) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %8s %8s %10s %8s\n", "metric", "top1", "top5", "gt-known", "miou");
    out << line;
    std::snprintf(line, sizeof(line), "%-10s %8.4f %8.4f %10.4f %8.4f\n", "value", report.top1, report.top5,
                  report.gt_known, report.miou);
    out << line;
    out << "sweep (threshold top1 top5 gt-known):\n";
    for (const SweepPoint& p : report.sweep) {
        std::snprintf(line, sizeof(line), "  %.1f %8.4f %8.4f %10.4f\n", p.threshold, p.top1, p.top5, p.gt_known);
        out << line;
    }
}

void write_report(const LocalizationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_report: cannot open " + path.string());
    char line[96];
    std::snprintf(line, sizeof(line), "top1 %.2f %.6f\n", report.threshold, report.top1);
    out << line;
    std::snprintf(line, sizeof(line), "top5 %.2f %.6f\n", report.threshold, report.top5);
    out << line;
    std::snprintf(line, sizeof(line), "gt_known %.2f %.6f\n", report.threshold, report.gt_known);
    out << line;
    std::snprintf(line, sizeof(line), "miou - %.6f\n", report.miou);
    out << line;
    for (const SweepPoint& p : report.sweep) {
        std::snprintf(line, sizeof(line), "top1 %.1f %.6f\n", p.threshold, p.top1);
        out << line;
        std::snprintf(line, sizeof(line), "top5 %.1f %.6f\n", p.threshold, p.top5);
        out << line;
        std::snprintf(line, sizeof(line), "gt_known %.1f %.6f\n", p.threshold, p.gt_known);
        out << line;
    }
    if (!out) throw IoError("write_report: write failed for " + path.string());
}

}  // namespace wsol
