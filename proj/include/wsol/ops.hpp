#pragma once

#include <vector>

#include "wsol/tensor.hpp"

namespace wsol {

// Differentiable tensor operations. Every function is a pure forward
// computation; when a tape is active and an input requires gradients, the
// matching backward step is recorded. Gradients of multiply-used tensors
// accumulate by summation.

/// Elementwise a + b (same shape).
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise x + c.
Tensor add_scalar(const Tensor& x, double c);

/// Elementwise c * x.
Tensor scale(const Tensor& x, double c);

/// Elementwise 1 - x.
Tensor one_minus(const Tensor& x);

/// Hadamard product. Shapes must match, or b may be a single-channel
/// [N,1,H,W] mask multiplied across every channel of a [N,C,H,W] tensor.
/// Both factors receive gradients.
Tensor mul_elementwise(const Tensor& a, const Tensor& b);

/// Elementwise a / b (same shape).
Tensor div_elementwise(const Tensor& a, const Tensor& b);

/// Elementwise max(x, 0). Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// Elementwise logistic 1/(1+exp(-x)), branch form that never overflows.
Tensor sigmoid(const Tensor& x);

/// Same values, cut out of the computation graph: gradients never flow
/// into x through the result.
Tensor detach(const Tensor& x);

/// Same data viewed under a new shape with identical element count.
Tensor reshape(const Tensor& x, std::vector<int> shape);

/// 2-d cross-correlation of [N,Ci,H,W] with [Co,Ci,kh,kw] plus per-channel
/// bias [Co]. Output is [N,Co,H',W'] with H' = (H+2p-kh)/s + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Mean over k-by-k windows. In the k == stride tiling mode the spatial
/// dims must divide by the stride.
Tensor avg_pool2d(const Tensor& x, int k, int stride);

/// Per-channel spatial mean: [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

/// Row-wise softmax over [N,C], max-subtracted for stability.
Tensor softmax(const Tensor& x);

/// Mean over rows of logsumexp(scores_n) - scores_n[label_n]; equals the
/// cross-entropy of softmax(scores) against the labels without forming
/// either factor explicitly.
Tensor cross_entropy_from_scores(const Tensor& scores, const std::vector<int>& labels);

/// Corner-aligned bilinear interpolation of [N,1,h,w] up to [N,1,H,W].
Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w);

/// Extract one channel per sample: [N,C,H,W] -> [N,1,H,W].
Tensor slice_channel(const Tensor& x, const std::vector<int>& channels);

/// Sum of all elements as a scalar tensor.
Tensor sum_all(const Tensor& x);

/// Mean of all elements as a scalar tensor.
Tensor mean_all(const Tensor& x);

}  // namespace wsol
