#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsol/ops.hpp"
#include "wsol/tensor.hpp"

namespace wsol {

/// Which CAM channel becomes the foreground mask.
enum class ClassSelect { GroundTruth, Predicted };

struct ModelConfig {
    int input_size = 64;
    int num_classes = 8;
    int feature_channels = 32;
    // Downsampling factor of the feature extractor; the classifier halves
    // the resolution once more.
    int feature_stride = 8;
    int backbone_blocks = 3;
    std::uint32_t seed = 0;

    int score_stride() const { return 2 * feature_stride; }
    int feature_size() const { return input_size / feature_stride; }

    /// Throws ConfigError if the fields are inconsistent.
    void validate() const;
};

/// One forward pass's artifacts.
struct ActivationBundle {
    Tensor features;    // F_f   [N,Cf,h,w]
    Tensor scores;      // F_c   [N,C,h/2,w/2], pre-softmax
    Tensor cam;         // F_cam [N,C,h,w], values in (0,1)
    Tensor foreground;  // F_fg  [N,1,h,w], selected channel of cam
    Tensor gap_scores;  // GAP(F_c) [N,C]
    Tensor probs;       // p [N,C], rows sum to 1
    std::vector<int> selected_classes;
};

/// Shared feature extractor, classifier head, and localizer head. Parameter
/// shapes are a pure function of the config; values come from a fan-in
/// scaled uniform distribution drawn from the seeded generator.
class WsolNet {
  public:
    explicit WsolNet(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    /// E_f: image [N,3,S,S] -> features [N,Cf,h,w].
    Tensor extract_features(const Tensor& image) const;

    /// E_c: features -> score map [N,C,h/2,w/2]. With detach_params the
    /// scores still depend on the input but the classifier parameters
    /// receive no gradient through this call.
    Tensor classify_features(const Tensor& features, bool detach_params = false) const;

    /// E_l: features -> raw localizer scores [N,C,h,w] (pre-sigmoid).
    Tensor localize_raw(const Tensor& features) const;

    /// Parameters in fixed declaration order with checkpoint-stable names.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    /// Replace a parameter's values (shape-checked); used by checkpoint load.
    void set_parameter(const std::string& name, const Tensor& value);

  private:
    struct ConvLayer {
        Tensor weight;  // [Co,Ci,kh,kw]
        Tensor bias;    // [Co]
        int stride = 1;
        int padding = 0;
    };

    Tensor apply(const ConvLayer& layer, const Tensor& x, bool detach_params) const;

    ModelConfig config_;
    std::vector<ConvLayer> backbone_;
    ConvLayer classifier_conv_;  // 3x3, stride 2
    ConvLayer classifier_head_;  // 1x1 -> C
    ConvLayer localizer_conv_;   // 3x3, stride 1
    ConvLayer localizer_head_;   // 1x1 -> C

    std::vector<std::pair<std::string, const ConvLayer*>> layer_registry() const;
};

/// Full forward pass. With ClassSelect::GroundTruth, labels must hold one
/// class index per sample; with Predicted the argmax of p is used (ties to
/// the smaller index).
ActivationBundle forward(const WsolNet& net, const Tensor& image, ClassSelect select,
                         const std::vector<int>& labels = {});

/// F_fg interpolated to image resolution: [N,1,h,w] -> [N,1,S,S].
Tensor foreground_heatmap(const ActivationBundle& bundle, int image_size);

}  // namespace wsol
