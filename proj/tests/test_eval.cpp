#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "wsol/eval.hpp"

using namespace wsol;

namespace {

// Brute-force IoU: count membership of every pixel in a bounding grid.
double iou_rasterized(const Box& a, const Box& b, int grid) {
    long long inter = 0, uni = 0;
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Box random_box(Rng& rng, int grid) {
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(grid - 1)));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(grid - 1)));
    const int x1 = x0 + 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(grid - x0 - 1)) );
    const int y1 = y0 + 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(grid - y0 - 1)) );
    return Box{x0, y0, x1, y1};
}

// Independent flood-fill oracle for extract_box: largest 4-connected
// component of cells above the cut, ties by first raster pixel.
Box flood_fill_box(const Tensor& heatmap, double theta) {
    const int H = heatmap.dim(1), W = heatmap.dim(2);
    const double* p = heatmap.data();
    double max_value = p[0];
    for (std::size_t i = 1; i < heatmap.size(); ++i) max_value = std::max(max_value, p[i]);
    const double cut = theta * max_value;
    std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
    int best_label = -1, best_size = 0;
    Box best{};
    int next = 0;
    for (int s = 0; s < H * W; ++s) {
        if (p[s] < cut || label[static_cast<std::size_t>(s)] != -1) continue;
        std::vector<int> frontier{s};
        label[static_cast<std::size_t>(s)] = next;
        std::vector<int> members;
        while (!frontier.empty()) {
            const int cell = frontier.back();
            frontier.pop_back();
            members.push_back(cell);
            const int y = cell / W, x = cell % W;
            const int candidates[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& c : candidates) {
                if (c[0] < 0 || c[0] >= H || c[1] < 0 || c[1] >= W) continue;
                const int idx = c[0] * W + c[1];
                if (p[idx] >= cut && label[static_cast<std::size_t>(idx)] == -1) {
                    label[static_cast<std::size_t>(idx)] = next;
                    frontier.push_back(idx);
                }
            }
        }
        if (static_cast<int>(members.size()) > best_size) {
            best_size = static_cast<int>(members.size());
            best_label = next;
            Box box{W, H, 0, 0};
            for (int cell : members) {
                box.x0 = std::min(box.x0, cell % W);
                box.y0 = std::min(box.y0, cell / W);
                box.x1 = std::max(box.x1, cell % W + 1);
                box.y1 = std::max(box.y1, cell / W + 1);
            }
            best = box;
        }
        ++next;
    }
    REQUIRE(best_label >= 0);
    return best;
}

Tensor box_heatmap(int grid, const Box& box, double inside = 1.0, double outside = 0.0) {
    Tensor map({1, grid, grid});
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            const bool in = x >= box.x0 && x < box.x1 && y >= box.y0 && y < box.y1;
            map.data()[static_cast<std::size_t>(y) * grid + x] = in ? inside : outside;
        }
    }
    return map;
}

Tensor one_hot(int c, int num_classes) {
    Tensor probs({num_classes});
    probs.data()[c] = 1.0;
    return probs;
}

}  // namespace

TEST_CASE("iou examples") {
    CHECK(iou(Box{2, 3, 7, 9}, Box{2, 3, 7, 9}) == 1.0);
    CHECK(iou(Box{0, 0, 10, 10}, Box{5, 5, 15, 15}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    CHECK(iou(Box{0, 0, 2, 2}, Box{3, 3, 5, 5}) == 0.0);
    CHECK_THROWS_AS(iou(Box{0, 0, 0, 1}, Box{0, 0, 1, 1}), ContractError);
}

TEST_CASE("iou properties against the rasterization oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 500; ++trial) {
        const Box a = random_box(rng, 64);
        const Box b = random_box(rng, 64);
        const double v = iou(a, b);
        CHECK(v == iou_rasterized(a, b, 64));
        CHECK(v == iou(b, a));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (v == 1.0) CHECK(a == b);
    }
}

TEST_CASE("extract_box") {
    SUBCASE("single filled rectangle") {
        Tensor map = box_heatmap(12, Box{3, 4, 9, 10});
        CHECK(extract_box(map, 0.5) == Box{3, 4, 9, 10});
    }
    SUBCASE("largest of two components wins") {
        Tensor map({1, 8, 8});
        // 3x3 component (9 cells) and a 2x2 component (4 cells).
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) map.data()[static_cast<std::size_t>(y) * 8 + x] = 1.0;
        }
        for (int y = 5; y < 7; ++y) {
            for (int x = 5; x < 7; ++x) map.data()[static_cast<std::size_t>(y) * 8 + x] = 1.0;
        }
        CHECK(extract_box(map, 0.5) == Box{0, 0, 3, 3});
    }
    SUBCASE("constant positive map covers the full image") {
        Tensor map = Tensor::full({1, 6, 6}, 0.2);
        CHECK(extract_box(map, 1.0) == Box{0, 0, 6, 6});
    }
    SUBCASE("contract errors") {
        Tensor map = box_heatmap(6, Box{1, 1, 3, 3});
        CHECK_THROWS_AS(extract_box(map, 1.5), ContractError);
        CHECK_THROWS_AS(extract_box(Tensor({1, 4, 4}), 0.5), ContractError);
        CHECK_THROWS_AS(extract_box(Tensor({2, 4, 4}), 0.5), DimensionError);
    }
    SUBCASE("matches the flood-fill oracle on random binary maps") {
        Rng rng(123);
        for (int trial = 0; trial < 200; ++trial) {
            const int grid = 8 + static_cast<int>(rng.uniform_int(25));
            Tensor map({1, grid, grid});
            bool any = false;
            for (std::size_t i = 0; i < map.size(); ++i) {
                map.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
                any = any || map.data()[i] > 0.0;
            }
            if (!any) map.data()[0] = 1.0;
            CHECK(extract_box(map, 0.5) == flood_fill_box(map, 0.5));
        }
    }
}

TEST_CASE("evaluate") {
    SUBCASE("perfect predictions score 1.0 everywhere") {
        std::vector<Sample> samples;
        std::vector<Prediction> predictions;
        Rng rng(5);
        for (int i = 0; i < 6; ++i) {
            const Box box = random_box(rng, 16);
            Sample sample;
            sample.image = Tensor({3, 16, 16});
            sample.label = i % 3;
            sample.gt_box = box;
            samples.push_back(std::move(sample));
            predictions.push_back({one_hot(i % 3, 3), box_heatmap(16, box)});
        }
        LocalizationReport report = evaluate(samples, predictions, 0.5, 0.5);
        CHECK(report.top1 == 1.0);
        CHECK(report.top5 == 1.0);
        CHECK(report.gt_known == 1.0);
        CHECK(report.miou == 1.0);
    }
    SUBCASE("hand-computed mIoU: class means 0.6 and 0.2 average to 0.4") {
        std::vector<Sample> samples(3);
        std::vector<Prediction> predictions;
        const int S = 16;
        // IoU 0.5: predicted (0,0,2,1) vs gt (0,0,2,2).
        samples[0].label = 0;
        samples[0].gt_box = Box{0, 0, 2, 2};
        predictions.push_back({one_hot(0, 2), box_heatmap(S, Box{0, 0, 2, 1})});
        // IoU 0.7: predicted (0,0,7,1) vs gt (0,0,10,1).
        samples[1].label = 0;
        samples[1].gt_box = Box{0, 0, 10, 1};
        predictions.push_back({one_hot(0, 2), box_heatmap(S, Box{0, 0, 7, 1})});
        // IoU 0.2: predicted (0,0,1,1) vs gt (0,0,5,1).
        samples[2].label = 1;
        samples[2].gt_box = Box{0, 0, 5, 1};
        predictions.push_back({one_hot(1, 2), box_heatmap(S, Box{0, 0, 1, 1})});

        LocalizationReport report = evaluate(samples, predictions, 0.5, 0.5);
        CHECK(report.per_class_iou.at(0)[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(report.per_class_iou.at(0)[1] == doctest::Approx(0.7).epsilon(1e-15));
        CHECK(report.per_class_iou.at(1)[0] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(report.miou == doctest::Approx(0.4).epsilon(1e-12));

        // IoU exactly 0.5 does not count at threshold 0.5.
        CHECK(report.gt_known == doctest::Approx(1.0 / 3.0));
        CHECK(report.top1 == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("metric ordering and monotone sweep on random inputs") {
        Rng rng(31);
        std::vector<Sample> samples;
        std::vector<Prediction> predictions;
        for (int i = 0; i < 40; ++i) {
            Sample sample;
            sample.label = static_cast<int>(rng.uniform_int(6));
            sample.gt_box = random_box(rng, 24);
            samples.push_back(std::move(sample));
            Tensor probs({6});
            for (int c = 0; c < 6; ++c) probs.data()[c] = rng.uniform();
            Tensor heat({1, 24, 24});
            for (std::size_t j = 0; j < heat.size(); ++j) heat.data()[j] = rng.uniform(0.01, 1.0);
            predictions.push_back({probs, heat});
        }
        LocalizationReport report = evaluate(samples, predictions, 0.5, 0.45);
        REQUIRE(report.sweep.size() == 9);
        for (std::size_t i = 0; i < report.sweep.size(); ++i) {
            const SweepPoint& p = report.sweep[i];
            CHECK(p.top1 <= p.top5);
            CHECK(p.top5 <= p.gt_known);
            if (i > 0) {
                CHECK(p.top1 <= report.sweep[i - 1].top1);
                CHECK(p.top5 <= report.sweep[i - 1].top5);
                CHECK(p.gt_known <= report.sweep[i - 1].gt_known);
            }
        }
    }
    SUBCASE("missing ground-truth box is a contract error") {
        std::vector<Sample> samples(1);
        samples[0].label = 0;
        std::vector<Prediction> predictions{{one_hot(0, 2), box_heatmap(8, Box{1, 1, 3, 3})}};
        CHECK_THROWS_AS(evaluate(samples, predictions), ContractError);
    }
    SUBCASE("report files") {
        std::vector<Sample> samples(1);
        samples[0].label = 0;
        samples[0].gt_box = Box{1, 1, 3, 3};
        std::vector<Prediction> predictions{{one_hot(0, 2), box_heatmap(8, Box{1, 1, 3, 3})}};
        LocalizationReport report = evaluate(samples, predictions);
        const auto path = std::filesystem::temp_directory_path() / "wsol_test_report.txt";
        write_report(report, path);
        std::ifstream in(path);
        std::string first;
        std::getline(in, first);
        CHECK(first == "top1 0.50 1.000000");
        int lines = 1;
        std::string rest;
        while (std::getline(in, rest)) ++lines;
        CHECK(lines == 4 + 27);  // four summary lines plus 9 sweep rows of 3 metrics
    }
}
