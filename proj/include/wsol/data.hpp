#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsol/box.hpp"
#include "wsol/tensor.hpp"

namespace wsol {

/// One image with its image-level class label. The ground-truth box exists
/// for evaluation only; no training code reads it.
struct Sample {
    Tensor image;  // [3,S,S], values in [0,1]
    int label = 0;
    std::optional<Box> gt_box;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    int image_size = 0;
};

/// Parameters of the synthetic shapes dataset. Classes are shape-kind and
/// color pairings, so both a spatially local cue (corners, bars) and a
/// global cue (color) identify the class.
struct DatasetSpec {
    int num_classes = 8;
    int samples_per_class = 64;
    int image_size = 64;
    double noise_level = 0.1;
    std::uint32_t seed = 0;

    void validate() const;
};

/// Number of distinct shape kinds the generator can draw.
int num_shape_kinds();

/// Deterministically generates the dataset: one filled shape per image at a
/// random position and scale over a noise background, with the exact tight
/// bounding box of the rasterized shape pixels.
Dataset generate(const DatasetSpec& spec);

/// Writes images as binary PPM plus the plain-text index file
/// ("<relative-path> <class-id> [x0 y0 x1 y1]" per line).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Loads a dataset directory written by save_dataset (or any directory
/// following the same index format). Malformed lines and out-of-range
/// boxes raise IoError naming the line.
Dataset load_dataset(const std::filesystem::path& dir);

/// 8-bit binary PPM (P6) round trip for a [3,H,W] tensor in [0,1].
void write_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);

/// 8-bit binary PGM (P5) export of a [H,W] or [1,H,W] map, scaled by 255
/// and clamped to [0,1] first.
void write_pgm(const Tensor& map, const std::filesystem::path& path);

}  // namespace wsol
