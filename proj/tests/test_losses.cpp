#include <doctest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"
#include "wsol/losses.hpp"

using namespace wsol;
using wsol::test::max_rel_err;
using wsol::test::numeric_grad;
using wsol::test::random_tensor;

namespace {

ModelConfig toy_config(int feature_channels = 4, int num_classes = 2) {
    ModelConfig config;
    config.input_size = 32;
    config.num_classes = num_classes;
    config.feature_channels = feature_channels;
    config.feature_stride = 8;
    config.backbone_blocks = 3;
    config.seed = 7;
    return config;
}

struct Fixture {
    WsolNet net;
    Tensor image;
    std::vector<int> labels;

    explicit Fixture(std::uint64_t seed = 11, int num_classes = 2)
        : net(toy_config(4, num_classes)), image({2, 3, 32, 32}), labels{0, num_classes - 1} {
        Rng rng(seed);
        for (std::size_t i = 0; i < image.size(); ++i) image.data()[i] = rng.uniform(0.0, 1.0);
        // Freshly initialized nets can have all-negative score channels,
        // which the relu clamp turns into a flat (zero-gradient) region for
        // the suppression loss. A positive head bias keeps scores alive.
        net.set_parameter("ec.head.bias", Tensor::full({num_classes}, 0.25));
    }

    ActivationBundle bundle() const { return forward(net, image, ClassSelect::GroundTruth, labels); }
};

// Gradients of every parameter whose name starts with the prefix.
std::vector<Tensor> grads_with_prefix(Tape& tape, const WsolNet& net, const std::string& prefix) {
    std::vector<Tensor> grads;
    for (const auto& [name, param] : net.named_parameters()) {
        if (name.rfind(prefix, 0) == 0) grads.push_back(tape.grad(param));
    }
    return grads;
}

bool all_zero(const std::vector<Tensor>& grads) {
    for (const Tensor& g : grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g.data()[i] != 0.0) return false;
        }
    }
    return true;
}

bool any_nonzero(const std::vector<Tensor>& grads) { return !all_zero(grads); }

}  // namespace

TEST_CASE("loss_cls closed-form values") {
    ActivationBundle bundle;
    bundle.gap_scores = Tensor({1, 2}, {1.0, 0.0});
    CHECK(loss_cls(bundle, {0}).value() == doctest::Approx(0.31326168751822286).epsilon(1e-12));

    // Identical scores across channels reduce to the uniform case ln C.
    bundle.gap_scores = Tensor::full({1, 4}, 0.7);
    CHECK(loss_cls(bundle, {2}).value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Fixture fix;
    CHECK(loss_cls(fix.bundle(), fix.labels).value() >= 0.0);
}

TEST_CASE("loss_cls_fg") {
    Fixture fix;
    ActivationBundle bundle = fix.bundle();

    SUBCASE("all-ones foreground collapses to loss_cls bit-exactly") {
        ActivationBundle masked = bundle;
        masked.foreground = Tensor::full({2, 1, 4, 4}, 1.0);
        CHECK(loss_cls_fg(masked, fix.labels).value() == loss_cls(bundle, fix.labels).value());
    }
    SUBCASE("all-zero foreground gives the uniform loss ln C") {
        ActivationBundle masked = bundle;
        masked.foreground = Tensor({2, 1, 4, 4});
        CHECK(loss_cls_fg(masked, fix.labels).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("localizer parameters receive gradient") {
        Tape tape;
        ActivationBundle live = fix.bundle();
        tape.backward(loss_cls_fg(live, fix.labels));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "el.")));
    }
    SUBCASE("localizer gradient matches finite differences") {
        auto params = fix.net.named_parameters();
        Tensor el_weight;
        for (auto& [name, param] : params) {
            if (name == "el.head.weight") el_weight = param;
        }
        Tensor analytic;
        {
            Tape tape;
            ActivationBundle live = fix.bundle();
            tape.backward(loss_cls_fg(live, fix.labels));
            analytic = tape.grad(el_weight);
        }
        auto eval = [&] { return loss_cls_fg(fix.bundle(), fix.labels).value(); };
        CHECK(max_rel_err(analytic, numeric_grad(eval, el_weight), 1e-6) < 1e-5);
    }
}

TEST_CASE("loss_ae") {
    Fixture fix;
    ActivationBundle bundle = fix.bundle();

    SUBCASE("threshold above the maximum erases nothing") {
        CHECK(loss_ae(bundle, fix.labels, 1.0).value() == loss_cls(bundle, fix.labels).value());
    }
    SUBCASE("threshold zero erases everything") {
        CHECK(loss_ae(bundle, fix.labels, 0.0).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("localizer parameters receive exactly zero gradient") {
        Tape tape;
        ActivationBundle live = fix.bundle();
        tape.backward(loss_ae(live, fix.labels, 0.5));
        CHECK(all_zero(grads_with_prefix(tape, fix.net, "el.")));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "ec.")));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "ef.")));
    }
}

TEST_CASE("loss_ae_fg") {
    Fixture fix;
    ActivationBundle bundle = fix.bundle();

    SUBCASE("threshold above the maximum collapses to loss_cls_fg") {
        CHECK(loss_ae_fg(bundle, fix.labels, 1.0).value() == loss_cls_fg(bundle, fix.labels).value());
    }
    SUBCASE("threshold zero erases everything") {
        CHECK(loss_ae_fg(bundle, fix.labels, 0.0).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("retained cells route gradient into the localizer") {
        Tape tape;
        ActivationBundle live = fix.bundle();
        tape.backward(loss_ae_fg(live, fix.labels, 0.99));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "el.")));
    }
}

TEST_CASE("loss_pseudo") {
    SUBCASE("direct evaluation of the stated example") {
        ActivationBundle bundle;
        bundle.foreground = Tensor({1, 1, 2, 2}, {0.9, 0.2, 0.3, 0.05});
        CHECK(loss_pseudo(bundle, 0.4, 0.1).value() == doctest::Approx(0.0375).epsilon(1e-12));
    }
    SUBCASE("all-uncertain map contributes nothing") {
        ActivationBundle bundle;
        bundle.foreground = Tensor::full({1, 1, 3, 3}, 0.25);
        CHECK(loss_pseudo(bundle, 0.4, 0.1).value() == 0.0);
    }
    SUBCASE("saturated foreground has zero residual") {
        ActivationBundle bundle;
        bundle.foreground = Tensor::full({1, 1, 3, 3}, 1.0);
        CHECK(loss_pseudo(bundle, 0.4, 0.1).value() == 0.0);
    }
    SUBCASE("classifier parameters receive exactly zero gradient") {
        Fixture fix;
        Tape tape;
        ActivationBundle live = fix.bundle();
        tape.backward(loss_pseudo(live, 0.4, 0.1));
        CHECK(all_zero(grads_with_prefix(tape, fix.net, "ec.")));
    }
}

namespace {

// Classifier fixture with analytically known responses: the 3x3 stage is an
// identity tap and the head sums feature channels, so constant features map
// to constant scores.
WsolNet passthrough_classifier_net(int feature_channels) {
    ModelConfig config = toy_config(feature_channels);
    WsolNet net(config);
    Tensor conv_w({feature_channels, feature_channels, 3, 3});
    for (int c = 0; c < feature_channels; ++c) conv_w.at(c, c, 1, 1) = 1.0;
    net.set_parameter("ec.conv.weight", conv_w);
    net.set_parameter("ec.conv.bias", Tensor({feature_channels}));
    Tensor head_w = Tensor::full({2, feature_channels, 1, 1}, 1.0);
    net.set_parameter("ec.head.weight", head_w);
    net.set_parameter("ec.head.bias", Tensor({2}));
    return net;
}

ActivationBundle constant_bundle(const WsolNet& net, double feature_value, double foreground_value) {
    ActivationBundle bundle;
    const int cf = net.config().feature_channels;
    const int h = net.config().feature_size();
    bundle.features = Tensor::full({1, cf, h, h}, feature_value);
    bundle.foreground = Tensor::full({1, 1, h, h}, foreground_value);
    bundle.scores = net.classify_features(bundle.features);
    bundle.gap_scores = global_avg_pool(bundle.scores);
    bundle.probs = softmax(bundle.gap_scores);
    bundle.selected_classes = {0};
    return bundle;
}

}  // namespace

TEST_CASE("loss_bas") {
    SUBCASE("known score ratio: s_all=2, s_bg=0.5 gives 0.25") {
        WsolNet net = passthrough_classifier_net(2);
        ActivationBundle bundle = constant_bundle(net, 1.0, 0.75);
        BasDetail detail;
        Tensor loss = loss_bas(bundle, {0}, net, 1e-8, true, &detail);
        CHECK(std::abs(loss.value() - 0.25) < 1e-8);
        CHECK(detail.s_all_mean == doctest::Approx(2.0));
        CHECK(detail.s_bg_mean == doctest::Approx(0.5));
        CHECK_FALSE(detail.skipped[0]);
    }
    SUBCASE("s_bg above s_all is skipped and contributes exactly zero") {
        // Negative conv tap plus positive bias: full features die at the
        // relu while background-masked features survive.
        ModelConfig config = toy_config(1);
        WsolNet net(config);
        Tensor conv_w({1, 1, 3, 3});
        conv_w.at(0, 0, 1, 1) = -1.0;
        net.set_parameter("ec.conv.weight", conv_w);
        net.set_parameter("ec.conv.bias", Tensor({1}, {0.5}));
        net.set_parameter("ec.head.weight", Tensor::full({2, 1, 1, 1}, 1.0));
        net.set_parameter("ec.head.bias", Tensor({2}));

        ActivationBundle bundle = constant_bundle(net, 1.0, 0.9);
        BasDetail detail;
        Tensor loss = loss_bas(bundle, {0}, net, 1e-8, true, &detail);
        CHECK(loss.value() == 0.0);
        CHECK(detail.skipped[0]);
        CHECK(detail.s_bg_mean > detail.s_all_mean);
    }
    SUBCASE("zero foreground makes background equal the full image") {
        WsolNet net = passthrough_classifier_net(2);
        ActivationBundle bundle = constant_bundle(net, 1.0, 0.0);
        Tensor loss = loss_bas(bundle, {0}, net, 1e-8, true);
        CHECK(loss.value() == doctest::Approx(1.0).epsilon(1e-8));
    }
    SUBCASE("detached classifier receives exactly zero gradient") {
        // All-positive classifier weights make the score monotone in the
        // features, so the background score cannot exceed the full score
        // and no sample is skipped.
        Fixture fix;
        fix.net.set_parameter("ec.conv.weight", Tensor::full({4, 4, 3, 3}, 0.05));
        fix.net.set_parameter("ec.head.weight", Tensor::full({2, 4, 1, 1}, 0.2));
        Tape tape;
        ActivationBundle live = fix.bundle();
        BasDetail detail;
        tape.backward(loss_bas(live, fix.labels, fix.net, 1e-8, true, &detail));
        CHECK_FALSE(detail.skipped[0]);
        CHECK(all_zero(grads_with_prefix(tape, fix.net, "ec.")));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "el.")));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "ef.")));
    }
    SUBCASE("without detaching, classifier parameters are reachable") {
        Fixture fix;
        fix.net.set_parameter("ec.conv.weight", Tensor::full({4, 4, 3, 3}, 0.05));
        fix.net.set_parameter("ec.head.weight", Tensor::full({2, 4, 1, 1}, 0.2));
        Tape tape;
        ActivationBundle live = fix.bundle();
        tape.backward(loss_bas(live, fix.labels, fix.net, 1e-8, false));
        CHECK(any_nonzero(grads_with_prefix(tape, fix.net, "ec.")));
    }
    SUBCASE("value stays in [0,1] on random bundles") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Fixture fix(seed);
            Tensor loss = loss_bas(fix.bundle(), fix.labels, fix.net, 1e-8, true);
            CHECK(loss.value() >= 0.0);
            CHECK(loss.value() <= 1.0);
        }
    }
}

TEST_CASE("loss_ac") {
    ActivationBundle bundle;
    bundle.foreground = Tensor::full({1, 1, 4, 4}, 0.5);
    CHECK(loss_ac(bundle).value() == 0.5);

    Fixture fix;
    const double v = loss_ac(fix.bundle()).value();
    CHECK(v > 0.0);
    CHECK(v < 1.0);

    SUBCASE("gradient is 1/N on every cell") {
        Tape tape;
        Tensor fg = Tensor::full({1, 1, 4, 4}, 0.3);
        fg.set_requires_grad(true);
        ActivationBundle hand;
        hand.foreground = fg;
        tape.backward(loss_ac(hand));
        Tensor g = tape.grad(fg);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 1.0 / 16.0);
    }
}

TEST_CASE("total_loss") {
    Fixture fix;
    LossConfig config;

    SUBCASE("every auxiliary term disabled leaves exactly loss_cls") {
        LossConfig only_cls;
        for (const char* term : {"cls-fg", "ae", "ae-fg", "pseudo", "bas", "ac"}) only_cls.disable(term);
        ActivationBundle bundle = fix.bundle();
        LossBreakdown breakdown = total_loss(bundle, fix.labels, fix.net, only_cls);
        CHECK(breakdown.total == loss_cls(bundle, fix.labels).value());
        CHECK(breakdown.cls_fg == 0.0);
        CHECK(breakdown.bas == 0.0);
    }
    SUBCASE("total equals the independently recomputed weighted sum") {
        ActivationBundle bundle = fix.bundle();
        LossBreakdown breakdown = total_loss(bundle, fix.labels, fix.net, config);
        const double expected = loss_cls(bundle, fix.labels).value() +
                                config.gamma[0] * loss_cls_fg(bundle, fix.labels).value() +
                                config.gamma[1] * loss_ae(bundle, fix.labels, config.thresholds.t1).value() +
                                config.gamma[2] * loss_ae_fg(bundle, fix.labels, config.thresholds.t2).value() +
                                config.gamma[3] * loss_pseudo(bundle, config.thresholds.t3, config.thresholds.t4).value() +
                                config.gamma[4] * loss_bas(bundle, fix.labels, fix.net, config.epsilon, true).value() +
                                config.gamma[5] * loss_ac(bundle).value();
        CHECK(std::abs(breakdown.total - expected) < 1e-12);
        CHECK(breakdown.cls >= 0.0);
        CHECK(breakdown.pseudo == doctest::Approx(breakdown.psd_fg + breakdown.psd_bg));
    }
    SUBCASE("doubling the area weight adds exactly one extra area term") {
        ActivationBundle bundle = fix.bundle();
        LossBreakdown base = total_loss(bundle, fix.labels, fix.net, config);
        LossConfig doubled = config;
        doubled.gamma[5] *= 2.0;
        LossBreakdown more = total_loss(bundle, fix.labels, fix.net, doubled);
        CHECK(more.total - base.total == doctest::Approx(config.gamma[5] * base.ac).epsilon(1e-12));
    }
    SUBCASE("all terms are non-negative") {
        LossBreakdown breakdown = total_loss(fix.bundle(), fix.labels, fix.net, config);
        for (double v : {breakdown.cls, breakdown.cls_fg, breakdown.ae, breakdown.ae_fg, breakdown.pseudo,
                         breakdown.bas, breakdown.ac, breakdown.total}) {
            CHECK(v >= 0.0);
        }
    }
    SUBCASE("config validation rejects bad values") {
        LossConfig bad;
        bad.gamma[2] = -0.5;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = LossConfig{};
        bad.epsilon = 0.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        CHECK_THROWS_AS(bad.disable("nope"), ConfigError);
    }
}
