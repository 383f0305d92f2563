#pragma once

#include <array>
#include <vector>

#include "wsol/masks.hpp"
#include "wsol/model.hpp"

namespace wsol {

/// Weights, thresholds, and routing switches for the combined training loss.
struct LossConfig {
    MaskThresholds thresholds;
    // Weights of cls_fg, ae, ae_fg, pseudo, bas, ac in that order.
    std::array<double, 6> gamma = {0.5, 0.5, 0.1, 0.1, 1.0, 1.5};
    double epsilon = 1e-8;
    // Route no gradient into classifier parameters through the background
    // suppression term.
    bool bas_detach_classifier = true;
    bool enable_cls_fg = true;
    bool enable_ae = true;
    bool enable_ae_fg = true;
    bool enable_pseudo = true;
    bool enable_bas = true;
    bool enable_ac = true;

    void validate() const;

    /// Disable one auxiliary term by name ("cls-fg", "ae", "ae-fg",
    /// "pseudo", "bas", "ac"). Throws ConfigError on unknown names.
    void disable(const std::string& term);
};

/// Scalar values of every term of one loss evaluation plus the
/// differentiable total.
struct LossBreakdown {
    double cls = 0.0;
    double cls_fg = 0.0;
    double ae = 0.0;
    double ae_fg = 0.0;
    double pseudo = 0.0;
    double psd_fg = 0.0;
    double psd_bg = 0.0;
    double bas = 0.0;
    double s_all = 0.0;  // batch mean of the full-image class score
    double s_bg = 0.0;   // batch mean of the background class score
    double ac = 0.0;
    double total = 0.0;
    std::vector<bool> bas_skipped;  // per-sample skip flags
    Tensor total_tensor;            // backward entry point
};

/// Classification loss: cross-entropy of softmax(GAP(F_c)) vs. the labels.
Tensor loss_cls(const ActivationBundle& bundle, const std::vector<int>& labels);

/// Foreground classification loss: scores masked by the downsampled
/// foreground before pooling. Gradients reach classifier, extractor, and
/// localizer.
Tensor loss_cls_fg(const ActivationBundle& bundle, const std::vector<int>& labels);

/// Adversarially erased classification loss with the binary mask. The mask
/// is detached, so the localizer receives no gradient.
Tensor loss_ae(const ActivationBundle& bundle, const std::vector<int>& labels, double t1);

/// Adversarially erased foreground loss with the soft mask; retained cells
/// carry gradient into the localizer.
Tensor loss_ae_fg(const ActivationBundle& bundle, const std::vector<int>& labels, double t2);

/// Pseudo-label loss: mean residual to 1 over confident foreground plus
/// mean residual to 0 over confident background; uncertain cells are left
/// out. When parts is non-null the two components are stored there.
Tensor loss_pseudo(const ActivationBundle& bundle, double t3, double t4,
                   std::pair<double, double>* parts = nullptr);

/// Per-sample diagnostics of the background suppression loss.
struct BasDetail {
    std::vector<bool> skipped;
    double s_all_mean = 0.0;
    double s_bg_mean = 0.0;
};

/// Background activation suppression: mean over samples of
/// s_bg/(s_all + epsilon), where both scores pool the relu-clamped
/// ground-truth channel. Samples with s_bg > s_all contribute zero and are
/// flagged. With detach_classifier the classifier parameters receive no
/// gradient while features and foreground still do.
Tensor loss_bas(const ActivationBundle& bundle, const std::vector<int>& labels, const WsolNet& net,
                double epsilon, bool detach_classifier, BasDetail* detail = nullptr);

/// Area constraint: mean foreground activation.
Tensor loss_ac(const ActivationBundle& bundle);

/// Weighted sum of the enabled terms. Disabled terms contribute zero and
/// are not evaluated.
LossBreakdown total_loss(const ActivationBundle& bundle, const std::vector<int>& labels,
                         const WsolNet& net, const LossConfig& config);

}  // namespace wsol
