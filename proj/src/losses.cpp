#include "wsol/losses.hpp"

namespace wsol {

void LossConfig::validate() const {
    thresholds.validate();
    for (double g : gamma) {
        if (g < 0.0) throw ConfigError("loss weights must be non-negative");
    }
    if (epsilon <= 0.0) throw ConfigError("loss epsilon must be positive");
}

void LossConfig::disable(const std::string& term) {
    if (term == "cls-fg") {
        enable_cls_fg = false;
    } else if (term == "ae") {
        enable_ae = false;
    } else if (term == "ae-fg") {
        enable_ae_fg = false;
    } else if (term == "pseudo") {
        enable_pseudo = false;
    } else if (term == "bas") {
        enable_bas = false;
    } else if (term == "ac") {
        enable_ac = false;
    } else {
        throw ConfigError("unknown loss term '" + term + "'");
    }
}

Tensor loss_cls(const ActivationBundle& bundle, const std::vector<int>& labels) {
    return cross_entropy_from_scores(bundle.gap_scores, labels);
}

Tensor loss_cls_fg(const ActivationBundle& bundle, const std::vector<int>& labels) {
    Tensor mask = downsample_mask(bundle.foreground);
    Tensor masked = mul_elementwise(bundle.scores, mask);
    return cross_entropy_from_scores(global_avg_pool(masked), labels);
}

Tensor loss_ae(const ActivationBundle& bundle, const std::vector<int>& labels, double t1) {
    Tensor mask = downsample_mask(erase_binary(bundle.foreground, t1));
    Tensor masked = mul_elementwise(bundle.scores, mask);
    return cross_entropy_from_scores(global_avg_pool(masked), labels);
}

Tensor loss_ae_fg(const ActivationBundle& bundle, const std::vector<int>& labels, double t2) {
    Tensor mask = downsample_mask(erase_soft(bundle.foreground, t2));
    Tensor masked = mul_elementwise(bundle.scores, mask);
    return cross_entropy_from_scores(global_avg_pool(masked), labels);
}

Tensor loss_pseudo(const ActivationBundle& bundle, double t3, double t4, std::pair<double, double>* parts) {
    PseudoLabels psd = pseudo_labels(bundle.foreground, t3, t4);
    // Residuals |label - F_fg| reduce to 1-F_fg on the foreground mask and
    // to F_fg on the background mask because F_fg lies in (0,1).
    Tensor fg_part = mean_all(mul_elementwise(one_minus(bundle.foreground), psd.fg_mask));
    Tensor bg_part = mean_all(mul_elementwise(bundle.foreground, psd.bg_mask));
    if (parts) *parts = {fg_part.value(), bg_part.value()};
    return add(fg_part, bg_part);
}

namespace {

// GAP of the relu-clamped ground-truth channel: [N,C,h,w] -> [N].
Tensor pooled_class_score(const Tensor& scores, const std::vector<int>& labels) {
    Tensor channel = relu(slice_channel(scores, labels));
    return reshape(global_avg_pool(channel), {scores.dim(0)});
}

}  // namespace

Tensor loss_bas(const ActivationBundle& bundle, const std::vector<int>& labels, const WsolNet& net,
                double epsilon, bool detach_classifier, BasDetail* detail) {
    const int N = bundle.features.dim(0);
    if (static_cast<int>(labels.size()) != N) {
        throw ContractError("loss_bas: one label per sample required");
    }

    // With the classifier detached, the full-image score is recomputed so
    // neither pooled score routes gradient into classifier parameters.
    // Values are bit-identical to bundle.scores either way.
    Tensor all_scores = detach_classifier ? net.classify_features(bundle.features, true) : bundle.scores;
    Tensor s_all = pooled_class_score(all_scores, labels);

    Tensor masked_features = mul_elementwise(bundle.features, background_mask(bundle.foreground));
    Tensor bg_scores = net.classify_features(masked_features, detach_classifier);
    Tensor s_bg = pooled_class_score(bg_scores, labels);

    // Per-sample skip rule: a background score above the full-image score
    // contributes nothing.
    Tensor keep({N});
    std::vector<bool> skipped(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        const bool skip = s_bg.data()[n] > s_all.data()[n];
        skipped[static_cast<std::size_t>(n)] = skip;
        keep.data()[n] = skip ? 0.0 : 1.0;
    }
    if (detail) {
        detail->skipped = skipped;
        detail->s_all_mean = mean_all(detach(s_all)).value();
        detail->s_bg_mean = mean_all(detach(s_bg)).value();
    }

    Tensor ratio = div_elementwise(s_bg, add_scalar(s_all, epsilon));
    return mean_all(mul_elementwise(ratio, keep));
}

Tensor loss_ac(const ActivationBundle& bundle) { return mean_all(bundle.foreground); }

LossBreakdown total_loss(const ActivationBundle& bundle, const std::vector<int>& labels,
                         const WsolNet& net, const LossConfig& config) {
    config.validate();
    LossBreakdown out;
    out.bas_skipped.assign(static_cast<std::size_t>(bundle.features.dim(0)), false);

    Tensor total = loss_cls(bundle, labels);
    out.cls = total.value();

    if (config.enable_cls_fg) {
        Tensor term = loss_cls_fg(bundle, labels);
        out.cls_fg = term.value();
        total = add(total, scale(term, config.gamma[0]));
    }
    if (config.enable_ae) {
        Tensor term = loss_ae(bundle, labels, config.thresholds.t1);
        out.ae = term.value();
        total = add(total, scale(term, config.gamma[1]));
    }
    if (config.enable_ae_fg) {
        Tensor term = loss_ae_fg(bundle, labels, config.thresholds.t2);
        out.ae_fg = term.value();
        total = add(total, scale(term, config.gamma[2]));
    }
    if (config.enable_pseudo) {
        std::pair<double, double> parts;
        Tensor term = loss_pseudo(bundle, config.thresholds.t3, config.thresholds.t4, &parts);
        out.pseudo = term.value();
        out.psd_fg = parts.first;
        out.psd_bg = parts.second;
        total = add(total, scale(term, config.gamma[3]));
    }
    if (config.enable_bas) {
        BasDetail detail;
        Tensor term = loss_bas(bundle, labels, net, config.epsilon, config.bas_detach_classifier, &detail);
        out.bas = term.value();
        out.s_all = detail.s_all_mean;
        out.s_bg = detail.s_bg_mean;
        out.bas_skipped = std::move(detail.skipped);
        total = add(total, scale(term, config.gamma[4]));
    }
    if (config.enable_ac) {
        Tensor term = loss_ac(bundle);
        out.ac = term.value();
        total = add(total, scale(term, config.gamma[5]));
    }

    out.total = total.value();
    out.total_tensor = total;
    return out;
}

}  // namespace wsol
