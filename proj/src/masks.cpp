#include "wsol/masks.hpp"

namespace wsol {

void MaskThresholds::validate() const {
    for (double t : {t1, t2, t3, t4}) {
        if (t < 0.0 || t > 1.0) throw ConfigError("mask thresholds must lie in [0,1]");
    }
    if (t4 >= t3) throw ConfigError("mask thresholds require t4 < t3");
}

Tensor erase_binary(const Tensor& foreground, double t1) {
    Tensor mask(foreground.shape());
    const double* p = foreground.data();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.data()[i] = p[i] >= t1 ? 0.0 : 1.0;
    }
    return mask;
}

Tensor erase_soft(const Tensor& foreground, double t2) {
    // Detached keep mask times the live values: erased cells block the
    // gradient, retained cells pass it through unchanged.
    Tensor keep(foreground.shape());
    const double* p = foreground.data();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        keep.data()[i] = p[i] >= t2 ? 0.0 : 1.0;
    }
    return mul_elementwise(foreground, keep);
}

PseudoLabels pseudo_labels(const Tensor& foreground, double t3, double t4) {
    if (t4 >= t3) throw ConfigError("pseudo_labels: t4 must be strictly below t3");
    PseudoLabels out{Tensor(foreground.shape()), Tensor(foreground.shape()), Tensor(foreground.shape())};
    const double* p = foreground.data();
    for (std::size_t i = 0; i < foreground.size(); ++i) {
        if (p[i] >= t3) {
            out.labels.data()[i] = 1.0;
            out.fg_mask.data()[i] = 1.0;
        } else if (p[i] <= t4) {
            out.bg_mask.data()[i] = 1.0;
        }
    }
    return out;
}

Tensor background_mask(const Tensor& foreground) { return one_minus(foreground); }

Tensor downsample_mask(const Tensor& mask) {
    if (mask.rank() != 4 || mask.dim(1) != 1) throw DimensionError("downsample_mask: mask must be [N,1,h,w]");
    return avg_pool2d(mask, 2, 2);
}

}  // namespace wsol
