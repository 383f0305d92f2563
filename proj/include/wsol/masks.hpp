#pragma once

#include "wsol/ops.hpp"
#include "wsol/tensor.hpp"

namespace wsol {

/// Thresholds for adversarial erasing (t1, t2) and pseudo-label generation
/// (t3 foreground, t4 background).
struct MaskThresholds {
    double t1 = 0.8;
    double t2 = 0.8;
    double t3 = 0.4;
    double t4 = 0.1;

    /// Throws ConfigError unless all thresholds are in [0,1] and t4 < t3.
    void validate() const;
};

/// Binary erase mask: 0 where the foreground probability reaches t1, 1
/// elsewhere. Built on detached values; no gradient reaches the input.
Tensor erase_binary(const Tensor& foreground, double t1);

/// Soft erase mask: 0 where the foreground probability reaches t2, the
/// probability itself elsewhere. The selection is detached but retained
/// values carry gradient.
Tensor erase_soft(const Tensor& foreground, double t2);

struct PseudoLabels {
    Tensor labels;   // 1 on confident foreground, 0 elsewhere
    Tensor fg_mask;  // cells >= t3
    Tensor bg_mask;  // cells <= t4
};

/// Pixel-level pseudo labels. Cells between t4 and t3 belong to neither
/// mask. All outputs are detached.
PseudoLabels pseudo_labels(const Tensor& foreground, double t3, double t4);

/// 1 - foreground; gradient flows through with factor -1.
Tensor background_mask(const Tensor& foreground);

/// Factor-2 average-pooling downsample to the score-map resolution.
Tensor downsample_mask(const Tensor& mask);

}  // namespace wsol
