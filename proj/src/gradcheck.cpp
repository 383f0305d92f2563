#include "wsol/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "wsol/random.hpp"

namespace wsol {

namespace {

// Relative error with an absolute floor: tiny gradients compare by absolute
// difference so finite-difference noise does not dominate.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

std::vector<GradCheckReport> gradcheck_losses(const GradCheckOptions& options) {
    ModelConfig config;
    config.input_size = 64;
    config.num_classes = 2;
    config.feature_channels = 4;
    config.feature_stride = 8;
    config.backbone_blocks = 3;
    config.seed = options.seed;
    WsolNet net(config);

    Rng rng(splitmix64(options.seed ^ 0x5eedULL));
    Tensor image({2, 3, 64, 64});
    for (std::size_t i = 0; i < image.size(); ++i) image.data()[i] = rng.uniform(0.0, 1.0);
    const std::vector<int> labels = {0, 1};

    const LossConfig loss_config;
    const MaskThresholds& t = loss_config.thresholds;

    using TermFn = std::function<Tensor(const ActivationBundle&)>;
    const std::vector<std::pair<std::string, TermFn>> terms = {
        {"cls", [&](const ActivationBundle& b) { return loss_cls(b, labels); }},
        {"cls-fg", [&](const ActivationBundle& b) { return loss_cls_fg(b, labels); }},
        {"ae", [&](const ActivationBundle& b) { return loss_ae(b, labels, t.t1); }},
        {"ae-fg", [&](const ActivationBundle& b) { return loss_ae_fg(b, labels, t.t2); }},
        {"pseudo", [&](const ActivationBundle& b) { return loss_pseudo(b, t.t3, t.t4); }},
        {"bas",
         [&](const ActivationBundle& b) {
             return loss_bas(b, labels, net, loss_config.epsilon, loss_config.bas_detach_classifier);
         }},
        {"ac", [&](const ActivationBundle& b) { return loss_ac(b); }},
    };

    auto params = net.named_parameters();
    std::vector<GradCheckReport> reports;
    bool corrupt_pending = options.corrupt;

    for (const auto& [term_name, term] : terms) {
        GradCheckReport report;
        report.term = term_name;

        std::vector<Tensor> analytic;
        {
            Tape tape;
            ActivationBundle bundle = forward(net, image, ClassSelect::GroundTruth, labels);
            tape.backward(term(bundle));
            for (const auto& [name, param] : params) analytic.push_back(tape.grad(param));
        }
        if (corrupt_pending) {
            analytic.front().data()[0] += 1e-2;
            corrupt_pending = false;
        }

        auto eval = [&] {
            ActivationBundle bundle = forward(net, image, ClassSelect::GroundTruth, labels);
            return term(bundle).value();
        };
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& param = params[p].second;
            for (std::size_t i = 0; i < param.size(); ++i) {
                double* slot = param.data() + i;
                const double saved = *slot;
                *slot = saved + options.fd_step;
                const double fp = eval();
                *slot = saved - options.fd_step;
                const double fm = eval();
                *slot = saved;
                const double numeric = (fp - fm) / (2.0 * options.fd_step);
                const double err = rel_err(analytic[p].data()[i], numeric);
                if (err > report.worst_rel_err) {
                    report.worst_rel_err = err;
                    report.worst_param = params[p].first + "[" + std::to_string(i) + "]";
                }
            }
        }
        report.passed = report.worst_rel_err < options.tolerance;
        reports.push_back(std::move(report));
    }
    return reports;
}

}  // namespace wsol
