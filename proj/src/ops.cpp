#include "wsol/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wsol {

namespace {

#ifndef NDEBUG
void check_finite(const Tensor& t, const char* op) {
    const double* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(p[i])) {
            throw NumericError(std::string(op) + " produced a non-finite value");
        }
    }
}
#else
inline void check_finite(const Tensor&, const char*) {}
#endif

bool tape_on() { return Tape::active() != nullptr; }

void record(Tensor& out, std::function<void(Tape&)> step) {
    out.set_requires_grad(true);
    Tape::active()->record(std::move(step));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch");
    }
}

// Valid output index range [lo, hi] along one spatial axis for kernel offset
// kd: every o in the range satisfies 0 <= o*stride + kd - pad < in_dim.
struct AxisRange {
    int lo, hi;
};
AxisRange conv_range(int out_dim, int in_dim, int kd, int stride, int pad) {
    int lo = 0;
    if (pad - kd > 0) lo = (pad - kd + stride - 1) / stride;
    int hi_num = in_dim - 1 - kd + pad;
    int hi = hi_num >= 0 ? hi_num / stride : -1;
    return {lo, std::min(hi, out_dim - 1)};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    const double *pa = a.data(), *pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    check_finite(out, "add");
    if (tape_on() && (a.requires_grad() || b.requires_grad())) {
        record(out, [a, b, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            if (a.requires_grad()) {
                double* ga = tape.grad_acc(a);
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                double* gb = tape.grad_acc(b);
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& x, double c) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] + c;
    check_finite(out, "add_scalar");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = c * px[i];
    check_finite(out, "scale");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, c](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += c * go[i];
        });
    }
    return out;
}

Tensor one_minus(const Tensor& x) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = 1.0 - px[i];
    check_finite(out, "one_minus");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] -= go[i];
        });
    }
    return out;
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
    const bool broadcast = a.shape() != b.shape();
    if (broadcast) {
        if (a.rank() != 4 || b.rank() != 4 || b.dim(1) != 1 || a.dim(0) != b.dim(0) ||
            a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
            throw DimensionError("mul_elementwise: shapes must match or b must be a single-channel mask");
        }
    }
    Tensor out(a.shape());
    const double *pa = a.data(), *pb = b.data();
    double* po = out.data();
    if (!broadcast) {
        for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    } else {
        const int N = a.dim(0), C = a.dim(1);
        const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
        for (int n = 0; n < N; ++n) {
            const double* mask = pb + n * plane;
            for (int c = 0; c < C; ++c) {
                const double* src = pa + (n * C + c) * plane;
                double* dst = po + (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * mask[i];
            }
        }
    }
    check_finite(out, "mul_elementwise");
    if (tape_on() && (a.requires_grad() || b.requires_grad())) {
        record(out, [a, b, out, broadcast](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const double *pa = a.data(), *pb = b.data();
            if (!broadcast) {
                if (a.requires_grad()) {
                    double* ga = tape.grad_acc(a);
                    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go[i] * pb[i];
                }
                if (b.requires_grad()) {
                    double* gb = tape.grad_acc(b);
                    for (std::size_t i = 0; i < b.size(); ++i) gb[i] += go[i] * pa[i];
                }
            } else {
                const int N = a.dim(0), C = a.dim(1);
                const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
                if (a.requires_grad()) {
                    double* ga = tape.grad_acc(a);
                    for (int n = 0; n < N; ++n) {
                        const double* mask = pb + n * plane;
                        for (int c = 0; c < C; ++c) {
                            const std::size_t base = (n * C + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) ga[base + i] += go[base + i] * mask[i];
                        }
                    }
                }
                if (b.requires_grad()) {
                    double* gb = tape.grad_acc(b);
                    for (int n = 0; n < N; ++n) {
                        for (int c = 0; c < C; ++c) {
                            const std::size_t base = (n * C + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) {
                                gb[n * plane + i] += go[base + i] * pa[base + i];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor div_elementwise(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div_elementwise");
    Tensor out(a.shape());
    const double *pa = a.data(), *pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] / pb[i];
    check_finite(out, "div_elementwise");
    if (tape_on() && (a.requires_grad() || b.requires_grad())) {
        record(out, [a, b, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const double *pa = a.data(), *pb = b.data();
            if (a.requires_grad()) {
                double* ga = tape.grad_acc(a);
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go[i] / pb[i];
            }
            if (b.requires_grad()) {
                double* gb = tape.grad_acc(b);
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] -= go[i] * pa[i] / (pb[i] * pb[i]);
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
    check_finite(out, "relu");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const double* px = x.data();
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (px[i] > 0.0) gx[i] += go[i];
            }
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = px[i];
        if (v >= 0.0) {
            po[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            po[i] = e / (1.0 + e);
        }
    }
    check_finite(out, "sigmoid");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const double* ps = out.data();
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += go[i] * ps[i] * (1.0 - ps[i]);
        });
    }
    return out;
}

Tensor detach(const Tensor& x) {
    return Tensor(x.shape(), std::vector<double>(x.data(), x.data() + x.size()));
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("reshape: dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    if (n != x.size()) throw DimensionError("reshape: element count mismatch");
    // Shares storage, so gradients keyed on storage identity flow through
    // without a recorded step.
    Tensor out = x;
    return Tensor::view(std::move(shape), out);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    if (input.rank() != 4 || weight.rank() != 4) {
        throw DimensionError("conv2d: input and weight must be rank-4");
    }
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != Ci) {
        throw DimensionError("conv2d: input channels " + std::to_string(Ci) + " do not match weight channels " +
                             std::to_string(weight.dim(1)));
    }
    if (bias.rank() != 1 || bias.dim(0) != Co) throw DimensionError("conv2d: bias must be [Co]");
    if (kh > H + 2 * padding || kw > W + 2 * padding) {
        throw DimensionError("conv2d: kernel larger than padded input");
    }
    const int Ho = (H + 2 * padding - kh) / stride + 1;
    const int Wo = (W + 2 * padding - kw) / stride + 1;

    Tensor out({N, Co, Ho, Wo});
    const double *pin = input.data(), *pw = weight.data(), *pb = bias.data();
    double* po = out.data();
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            double* out_plane = po + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
            const double bv = pb[co];
            for (int i = 0; i < Ho * Wo; ++i) out_plane[i] = bv;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* in_plane = pin + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
                const double* w_plane = pw + (static_cast<std::size_t>(co) * Ci + ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const auto [oy_lo, oy_hi] = conv_range(Ho, H, ky, stride, padding);
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = w_plane[ky * kw + kx];
                        const auto [ox_lo, ox_hi] = conv_range(Wo, W, kx, stride, padding);
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            const double* in_row = in_plane + (oy * stride + ky - padding) * W + kx - padding;
                            double* out_row = out_plane + oy * Wo;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                out_row[ox] += wv * in_row[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    check_finite(out, "conv2d");

    if (tape_on() && (input.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
        record(out, [input, weight, bias, out, stride, padding](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
            const int Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
            const int Ho = out.dim(2), Wo = out.dim(3);
            const double *pin = input.data(), *pw = weight.data();

            if (bias.requires_grad()) {
                double* gb = tape.grad_acc(bias);
                for (int n = 0; n < N; ++n) {
                    for (int co = 0; co < Co; ++co) {
                        const double* g_plane = go + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
                        double s = 0.0;
                        for (int i = 0; i < Ho * Wo; ++i) s += g_plane[i];
                        gb[co] += s;
                    }
                }
            }
            double* gw = weight.requires_grad() ? tape.grad_acc(weight) : nullptr;
            double* gi = input.requires_grad() ? tape.grad_acc(input) : nullptr;
            if (!gw && !gi) return;
            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < Co; ++co) {
                    const double* g_plane = go + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* in_plane = pin + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
                        const std::size_t w_base = (static_cast<std::size_t>(co) * Ci + ci) * kh * kw;
                        double* gi_plane = gi ? gi + (static_cast<std::size_t>(n) * Ci + ci) * H * W : nullptr;
                        for (int ky = 0; ky < kh; ++ky) {
                            const auto [oy_lo, oy_hi] = conv_range(Ho, H, ky, stride, padding);
                            for (int kx = 0; kx < kw; ++kx) {
                                const auto [ox_lo, ox_hi] = conv_range(Wo, W, kx, stride, padding);
                                const int off = kx - padding;
                                if (gw) {
                                    double s = 0.0;
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        const double* in_row = in_plane + (oy * stride + ky - padding) * W + off;
                                        const double* g_row = g_plane + oy * Wo;
                                        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                            s += g_row[ox] * in_row[ox * stride];
                                        }
                                    }
                                    gw[w_base + ky * kw + kx] += s;
                                }
                                if (gi_plane) {
                                    const double wv = pw[w_base + ky * kw + kx];
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        double* gi_row = gi_plane + (oy * stride + ky - padding) * W + off;
                                        const double* g_row = g_plane + oy * Wo;
                                        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                            gi_row[ox * stride] += wv * g_row[ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor avg_pool2d(const Tensor& x, int k, int stride) {
    if (x.rank() != 4) throw DimensionError("avg_pool2d: input must be rank-4");
    if (k < 1 || stride < 1) throw ConfigError("avg_pool2d: k and stride must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (k > H || k > W) throw DimensionError("avg_pool2d: window larger than input");
    if (k == stride && (H % stride != 0 || W % stride != 0)) {
        throw DimensionError("avg_pool2d: spatial dims must divide the stride in tiling mode");
    }
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;
    const double inv = 1.0 / (static_cast<double>(k) * k);

    Tensor out({N, C, Ho, Wo});
    const double* px = x.data();
    double* po = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const double* in_plane = px + static_cast<std::size_t>(nc) * H * W;
        double* out_plane = po + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                double s = 0.0;
                for (int ky = 0; ky < k; ++ky) {
                    const double* row = in_plane + (oy * stride + ky) * W + ox * stride;
                    for (int kx = 0; kx < k; ++kx) s += row[kx];
                }
                out_plane[oy * Wo + ox] = s * inv;
            }
        }
    }
    check_finite(out, "avg_pool2d");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, k, stride](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int Ho = out.dim(2), Wo = out.dim(3);
            const double inv = 1.0 / (static_cast<double>(k) * k);
            double* gx = tape.grad_acc(x);
            for (int nc = 0; nc < N * C; ++nc) {
                double* gx_plane = gx + static_cast<std::size_t>(nc) * H * W;
                const double* g_plane = go + static_cast<std::size_t>(nc) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    for (int ox = 0; ox < Wo; ++ox) {
                        const double g = g_plane[oy * Wo + ox] * inv;
                        for (int ky = 0; ky < k; ++ky) {
                            double* row = gx_plane + (oy * stride + ky) * W + ox * stride;
                            for (int kx = 0; kx < k; ++kx) row[kx] += g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("global_avg_pool: input must be rank-4");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor out({N, C});
    const double* px = x.data();
    double* po = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const double* plane = px + static_cast<std::size_t>(nc) * H * W;
        double s = 0.0;
        for (int i = 0; i < H * W; ++i) s += plane[i];
        po[nc] = s * inv;
    }
    check_finite(out, "global_avg_pool");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, inv](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int HW = x.dim(2) * x.dim(3);
            double* gx = tape.grad_acc(x);
            for (int nc = 0; nc < x.dim(0) * x.dim(1); ++nc) {
                const double g = go[nc] * inv;
                double* plane = gx + static_cast<std::size_t>(nc) * HW;
                for (int i = 0; i < HW; ++i) plane[i] += g;
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("softmax: input must be [N,C]");
    const int N = x.dim(0), C = x.dim(1);
    Tensor out({N, C});
    const double* px = x.data();
    double* po = out.data();
    for (int n = 0; n < N; ++n) {
        const double* row = px + static_cast<std::size_t>(n) * C;
        double* orow = po + static_cast<std::size_t>(n) * C;
        double m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            orow[c] = std::exp(row[c] - m);
            z += orow[c];
        }
        const double inv = 1.0 / z;
        for (int c = 0; c < C; ++c) orow[c] *= inv;
    }
    check_finite(out, "softmax");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = x.dim(0), C = x.dim(1);
            const double* ps = out.data();
            double* gx = tape.grad_acc(x);
            for (int n = 0; n < N; ++n) {
                const double* p = ps + static_cast<std::size_t>(n) * C;
                const double* g = go + static_cast<std::size_t>(n) * C;
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += g[c] * p[c];
                double* gr = gx + static_cast<std::size_t>(n) * C;
                for (int c = 0; c < C; ++c) gr[c] += p[c] * (g[c] - dot);
            }
        });
    }
    return out;
}

Tensor cross_entropy_from_scores(const Tensor& scores, const std::vector<int>& labels) {
    if (scores.rank() != 2) throw DimensionError("cross_entropy_from_scores: scores must be [N,C]");
    const int N = scores.dim(0), C = scores.dim(1);
    if (static_cast<int>(labels.size()) != N) {
        throw DimensionError("cross_entropy_from_scores: one label per row required");
    }
    for (int label : labels) {
        if (label < 0 || label >= C) {
            throw IndexError("cross_entropy_from_scores: label " + std::to_string(label) + " out of range");
        }
    }
    const double* ps = scores.data();
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const double* row = ps + static_cast<std::size_t>(n) * C;
        double m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(row[c] - m);
        total += m + std::log(z) - row[labels[static_cast<std::size_t>(n)]];
    }
    Tensor out = Tensor::scalar(total / N);
    check_finite(out, "cross_entropy_from_scores");
    if (tape_on() && scores.requires_grad()) {
        record(out, [scores, labels, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = scores.dim(0), C = scores.dim(1);
            const double g = go[0] / N;
            const double* ps = scores.data();
            double* gx = tape.grad_acc(scores);
            for (int n = 0; n < N; ++n) {
                const double* row = ps + static_cast<std::size_t>(n) * C;
                double* gr = gx + static_cast<std::size_t>(n) * C;
                double m = row[0];
                for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
                double z = 0.0;
                for (int c = 0; c < C; ++c) z += std::exp(row[c] - m);
                const double inv = 1.0 / z;
                for (int c = 0; c < C; ++c) gr[c] += g * std::exp(row[c] - m) * inv;
                gr[labels[static_cast<std::size_t>(n)]] -= g;
            }
        });
    }
    return out;
}

Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 4 || x.dim(1) != 1) throw DimensionError("bilinear_upsample: input must be [N,1,h,w]");
    const int N = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (out_h < h || out_w < w) throw DimensionError("bilinear_upsample: output must not be smaller than input");
    // Corner-aligned convention: output corners sample input corners exactly.
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;

    Tensor out({N, 1, out_h, out_w});
    const double* px = x.data();
    double* po = out.data();
    for (int n = 0; n < N; ++n) {
        const double* in_plane = px + static_cast<std::size_t>(n) * h * w;
        double* out_plane = po + static_cast<std::size_t>(n) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const double fy = oy * sy;
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                const double fx = ox * sx;
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                // Nested lerp form keeps constant inputs exactly constant.
                const double top = in_plane[y0 * w + x0] + wx * (in_plane[y0 * w + x1] - in_plane[y0 * w + x0]);
                const double bottom = in_plane[y1 * w + x0] + wx * (in_plane[y1 * w + x1] - in_plane[y1 * w + x0]);
                out_plane[oy * out_w + ox] = top + wy * (bottom - top);
            }
        }
    }
    check_finite(out, "bilinear_upsample");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, sy, sx](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = x.dim(0), h = x.dim(2), w = x.dim(3);
            const int out_h = out.dim(2), out_w = out.dim(3);
            double* gx = tape.grad_acc(x);
            for (int n = 0; n < N; ++n) {
                double* gx_plane = gx + static_cast<std::size_t>(n) * h * w;
                const double* g_plane = go + static_cast<std::size_t>(n) * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const double fy = oy * sy;
                    const int y0 = static_cast<int>(fy);
                    const int y1 = std::min(y0 + 1, h - 1);
                    const double wy = fy - y0;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const double fx = ox * sx;
                        const int x0 = static_cast<int>(fx);
                        const int x1 = std::min(x0 + 1, w - 1);
                        const double wx = fx - x0;
                        const double g = g_plane[oy * out_w + ox];
                        gx_plane[y0 * w + x0] += (1.0 - wy) * (1.0 - wx) * g;
                        gx_plane[y0 * w + x1] += (1.0 - wy) * wx * g;
                        gx_plane[y1 * w + x0] += wy * (1.0 - wx) * g;
                        gx_plane[y1 * w + x1] += wy * wx * g;
                    }
                }
            }
        });
    }
    return out;
}

Tensor slice_channel(const Tensor& x, const std::vector<int>& channels) {
    if (x.rank() != 4) throw DimensionError("slice_channel: input must be rank-4");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (static_cast<int>(channels.size()) != N) {
        throw DimensionError("slice_channel: one channel index per sample required");
    }
    for (int c : channels) {
        if (c < 0 || c >= C) throw IndexError("slice_channel: channel " + std::to_string(c) + " out of range");
    }
    Tensor out({N, 1, H, W});
    const double* px = x.data();
    double* po = out.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        const double* src = px + (static_cast<std::size_t>(n) * C + channels[static_cast<std::size_t>(n)]) * plane;
        std::copy(src, src + plane, po + n * plane);
    }
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, channels](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const int N = x.dim(0), C = x.dim(1);
            const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
            double* gx = tape.grad_acc(x);
            for (int n = 0; n < N; ++n) {
                double* dst = gx + (static_cast<std::size_t>(n) * C + channels[static_cast<std::size_t>(n)]) * plane;
                const double* src = go + n * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    const double* px = x.data();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += px[i];
    Tensor out = Tensor::scalar(s);
    check_finite(out, "sum_all");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += go[0];
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.size());
    const double* px = x.data();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += px[i];
    Tensor out = Tensor::scalar(s * inv);
    check_finite(out, "mean_all");
    if (tape_on() && x.requires_grad()) {
        record(out, [x, out, inv](Tape& tape) {
            const double* go = tape.find_grad(out);
            if (!go) return;
            const double g = go[0] * inv;
            double* gx = tape.grad_acc(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

}  // namespace wsol
