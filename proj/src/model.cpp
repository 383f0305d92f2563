#include "wsol/model.hpp"

#include <cmath>

#include "wsol/random.hpp"

namespace wsol {

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

int log2_int(int x) {
    int n = 0;
    while ((1 << n) < x) ++n;
    return n;
}

}  // namespace

void ModelConfig::validate() const {
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (feature_channels < 1) throw ConfigError("model: feature_channels must be >= 1");
    if (!is_power_of_two(feature_stride) || feature_stride < 2) {
        throw ConfigError("model: feature_stride must be a power of two >= 2");
    }
    if (backbone_blocks < log2_int(feature_stride)) {
        throw ConfigError("model: backbone_blocks must cover the feature_stride downsampling");
    }
    if (input_size < score_stride() || input_size % score_stride() != 0) {
        throw ConfigError("model: input_size must be a positive multiple of 2*feature_stride");
    }
}

WsolNet::WsolNet(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng rng(config_.seed);

    auto make_layer = [&rng](int in_ch, int out_ch, int k, int stride, int padding) {
        ConvLayer layer;
        layer.weight = Tensor({out_ch, in_ch, k, k});
        // Fan-in-scaled uniform with relu gain: keeps activation magnitude
        // roughly constant through the stacked conv-relu blocks.
        const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * k * k));
        for (std::size_t i = 0; i < layer.weight.size(); ++i) {
            layer.weight.data()[i] = rng.uniform(-bound, bound);
        }
        layer.bias = Tensor({out_ch});
        layer.weight.set_requires_grad(true);
        layer.bias.set_requires_grad(true);
        layer.stride = stride;
        layer.padding = padding;
        return layer;
    };

    const int striding_blocks = log2_int(config_.feature_stride);
    for (int i = 0; i < config_.backbone_blocks; ++i) {
        const int in_ch = i == 0 ? 3 : config_.feature_channels;
        const int stride = i < striding_blocks ? 2 : 1;
        backbone_.push_back(make_layer(in_ch, config_.feature_channels, 3, stride, 1));
    }
    classifier_conv_ = make_layer(config_.feature_channels, config_.feature_channels, 3, 2, 1);
    classifier_head_ = make_layer(config_.feature_channels, config_.num_classes, 1, 1, 0);
    localizer_conv_ = make_layer(config_.feature_channels, config_.feature_channels, 3, 1, 1);
    localizer_head_ = make_layer(config_.feature_channels, config_.num_classes, 1, 1, 0);
}

Tensor WsolNet::apply(const ConvLayer& layer, const Tensor& x, bool detach_params) const {
    if (detach_params) {
        return conv2d(x, detach(layer.weight), detach(layer.bias), layer.stride, layer.padding);
    }
    return conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding);
}

Tensor WsolNet::extract_features(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3) throw DimensionError("extract_features: image must be [N,3,S,S]");
    if (image.dim(2) != config_.input_size || image.dim(3) != config_.input_size) {
        throw DimensionError("extract_features: image size does not match config.input_size");
    }
    // Map [0,1] pixel values to a zero-centered range; raw intensities
    // leave a large DC component that slows the first conv layer badly.
    Tensor x = scale(add_scalar(image, -0.5), 2.0);
    for (const ConvLayer& layer : backbone_) {
        x = relu(apply(layer, x, false));
    }
    return x;
}

Tensor WsolNet::classify_features(const Tensor& features, bool detach_params) const {
    if (features.rank() != 4 || features.dim(1) != config_.feature_channels ||
        features.dim(2) != config_.feature_size() || features.dim(3) != config_.feature_size()) {
        throw DimensionError("classify_features: features do not match the extractor output shape");
    }
    Tensor x = relu(apply(classifier_conv_, features, detach_params));
    return apply(classifier_head_, x, detach_params);
}

Tensor WsolNet::localize_raw(const Tensor& features) const {
    Tensor x = relu(apply(localizer_conv_, features, false));
    return apply(localizer_head_, x, false);
}

std::vector<std::pair<std::string, const WsolNet::ConvLayer*>> WsolNet::layer_registry() const {
    std::vector<std::pair<std::string, const ConvLayer*>> layers;
    for (std::size_t i = 0; i < backbone_.size(); ++i) {
        layers.emplace_back("ef.block" + std::to_string(i), &backbone_[i]);
    }
    layers.emplace_back("ec.conv", &classifier_conv_);
    layers.emplace_back("ec.head", &classifier_head_);
    layers.emplace_back("el.conv", &localizer_conv_);
    layers.emplace_back("el.head", &localizer_head_);
    return layers;
}

std::vector<std::pair<std::string, Tensor>> WsolNet::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& [name, layer] : layer_registry()) {
        params.emplace_back(name + ".weight", layer->weight);
        params.emplace_back(name + ".bias", layer->bias);
    }
    return params;
}

void WsolNet::set_parameter(const std::string& name, const Tensor& value) {
    for (auto& [param_name, param] : named_parameters()) {
        if (param_name == name) {
            if (param.shape() != value.shape()) {
                throw DimensionError("set_parameter: shape mismatch for " + name);
            }
            std::copy(value.data(), value.data() + value.size(), param.data());
            return;
        }
    }
    throw IndexError("set_parameter: unknown parameter " + name);
}

ActivationBundle forward(const WsolNet& net, const Tensor& image, ClassSelect select,
                         const std::vector<int>& labels) {
    const int N = image.dim(0);
    if (select == ClassSelect::GroundTruth && static_cast<int>(labels.size()) != N) {
        throw ContractError("forward: ground-truth class selection requires one label per sample");
    }

    ActivationBundle bundle;
    bundle.features = net.extract_features(image);
    bundle.scores = net.classify_features(bundle.features);
    bundle.cam = sigmoid(net.localize_raw(bundle.features));
    bundle.gap_scores = global_avg_pool(bundle.scores);
    bundle.probs = softmax(bundle.gap_scores);

    if (select == ClassSelect::GroundTruth) {
        bundle.selected_classes = labels;
    } else {
        const int C = net.config().num_classes;
        bundle.selected_classes.resize(static_cast<std::size_t>(N));
        for (int n = 0; n < N; ++n) {
            const double* row = bundle.probs.data() + static_cast<std::size_t>(n) * C;
            int best = 0;
            for (int c = 1; c < C; ++c) {
                if (row[c] > row[best]) best = c;
            }
            bundle.selected_classes[static_cast<std::size_t>(n)] = best;
        }
    }
    bundle.foreground = slice_channel(bundle.cam, bundle.selected_classes);
    return bundle;
}

Tensor foreground_heatmap(const ActivationBundle& bundle, int image_size) {
    return bilinear_upsample(bundle.foreground, image_size, image_size);
}

}  // namespace wsol
