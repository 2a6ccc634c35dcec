// Copyright 2026 The stylemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <span>
#include <vector>

#include "stylemix/autodiff.hpp"

namespace stylemix {
namespace detail {

// Lowered convolution buffer: col[k][j] with k in [0, Cin*kh*kw) and
// j = ((b*Ho + ho)*Wo + wo) spanning the whole batch, so the GEMM inner
// loop runs over one long contiguous axis.
struct ConvPlan {
    int batch, cin, hin, win, cout, kh, kw, stride, pad, hout, wout;
    std::int64_t krows; // cin*kh*kw
    std::int64_t ncols; // batch*hout*wout
};

inline ConvPlan make_conv_plan(const Shape4& x, const Shape4& k, int stride, int pad) {
    if (x.c != k.c)
        throw ShapeError("conv2d: input channels " + x.str() + " vs kernel " + k.str());
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    if (pad < 0) throw ValueError("conv2d: pad must be >= 0");
    const int hout = (x.h + 2 * pad - k.h) / stride + 1;
    const int wout = (x.w + 2 * pad - k.w) / stride + 1;
    if (k.h > x.h + 2 * pad || k.w > x.w + 2 * pad || hout < 1 || wout < 1)
        throw ShapeError("conv2d: kernel " + k.str() + " does not fit input " + x.str());
    ConvPlan p{x.b, x.c, x.h, x.w, k.b, k.h, k.w, stride, pad, hout, wout, 0, 0};
    p.krows = static_cast<std::int64_t>(x.c) * k.h * k.w;
    p.ncols = static_cast<std::int64_t>(x.b) * hout * wout;
    return p;
}

inline void im2col(const ConvPlan& p, const double* x, double* col) {
    const std::int64_t n = p.ncols;
    const std::int64_t how = static_cast<std::int64_t>(p.hout) * p.wout;
    for (int ci = 0; ci < p.cin; ++ci) {
        for (int dh = 0; dh < p.kh; ++dh) {
            for (int dw = 0; dw < p.kw; ++dw) {
                const std::int64_t k = (static_cast<std::int64_t>(ci) * p.kh + dh) * p.kw + dw;
                double* row = col + k * n;
                for (int b = 0; b < p.batch; ++b) {
                    const double* plane =
                        x + (static_cast<std::int64_t>(b) * p.cin + ci) * p.hin * p.win;
                    double* dst = row + b * how;
                    for (int ho = 0; ho < p.hout; ++ho) {
                        const int hi = ho * p.stride - p.pad + dh;
                        double* out = dst + static_cast<std::int64_t>(ho) * p.wout;
                        if (hi < 0 || hi >= p.hin) {
                            std::fill(out, out + p.wout, 0.0);
                            continue;
                        }
                        const double* src = plane + static_cast<std::int64_t>(hi) * p.win;
                        for (int wo = 0; wo < p.wout; ++wo) {
                            const int wi = wo * p.stride - p.pad + dw;
                            out[wo] = (wi >= 0 && wi < p.win) ? src[wi] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

inline void col2im_add(const ConvPlan& p, const double* col, double* dx) {
    const std::int64_t n = p.ncols;
    const std::int64_t how = static_cast<std::int64_t>(p.hout) * p.wout;
    for (int ci = 0; ci < p.cin; ++ci) {
        for (int dh = 0; dh < p.kh; ++dh) {
            for (int dw = 0; dw < p.kw; ++dw) {
                const std::int64_t k = (static_cast<std::int64_t>(ci) * p.kh + dh) * p.kw + dw;
                const double* row = col + k * n;
                for (int b = 0; b < p.batch; ++b) {
                    double* plane =
                        dx + (static_cast<std::int64_t>(b) * p.cin + ci) * p.hin * p.win;
                    const double* src = row + b * how;
                    for (int ho = 0; ho < p.hout; ++ho) {
                        const int hi = ho * p.stride - p.pad + dh;
                        if (hi < 0 || hi >= p.hin) continue;
                        double* dst = plane + static_cast<std::int64_t>(hi) * p.win;
                        const double* in = src + static_cast<std::int64_t>(ho) * p.wout;
                        for (int wo = 0; wo < p.wout; ++wo) {
                            const int wi = wo * p.stride - p.pad + dw;
                            if (wi >= 0 && wi < p.win) dst[wi] += in[wo];
                        }
                    }
                }
            }
        }
    }
}

// out[m][j] += sum_k w[m][k] * col[k][j]; j is the long vectorizable axis.
inline void gemm_mk_kn(const double* w, const double* col, double* out,
                       std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        double* o = out + i * n;
        const double* wr = w + i * k;
        for (std::int64_t q = 0; q < k; ++q) {
            const double a = wr[q];
            const double* c = col + q * n;
            for (std::int64_t j = 0; j < n; ++j) o[j] += a * c[j];
        }
    }
}

} // namespace detail

/// 2-D cross-correlation of x (B,Cin,H,W) with kernel (Cout,Cin,kh,kw).
/// No bias term; differentiable in x and kernel.
inline Var conv2d(const Var& x, const Var& kernel, int stride, int pad) {
    const auto plan = detail::make_conv_plan(x->value.shape(), kernel->value.shape(),
                                             stride, pad);
    auto col = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(plan.krows * plan.ncols));
    detail::im2col(plan, x->value.data(), col->data());

    const std::int64_t how = static_cast<std::int64_t>(plan.hout) * plan.wout;
    std::vector<double> tmp(static_cast<std::size_t>(plan.cout * plan.ncols), 0.0);
    detail::gemm_mk_kn(kernel->value.data(), col->data(), tmp.data(),
                       plan.cout, plan.krows, plan.ncols);

    Tensor4 out(plan.batch, plan.cout, plan.hout, plan.wout);
    for (int b = 0; b < plan.batch; ++b)
        for (int m = 0; m < plan.cout; ++m)
            std::memcpy(&out.at(b, m, 0, 0), tmp.data() + m * plan.ncols + b * how,
                        static_cast<std::size_t>(how) * sizeof(double));

    Var node = make_var(std::move(out));
    node->parents = {x, kernel};
    node->backward_fn = [x, kernel, plan, col, how](Node& n) {
        const std::int64_t m = plan.cout, k = plan.krows, nc = plan.ncols;
        // Gather grad into the (m, j) layout used by the forward GEMM.
        std::vector<double> gtmp(static_cast<std::size_t>(m * nc));
        for (int b = 0; b < plan.batch; ++b)
            for (int mo = 0; mo < plan.cout; ++mo)
                std::memcpy(gtmp.data() + mo * nc + b * how, &n.grad.at(b, mo, 0, 0),
                            static_cast<std::size_t>(how) * sizeof(double));
        // dW[m][k] += <gtmp[m], col[k]>; four partial sums so the reduction
        // vectorizes without reassociation flags.
        double* gw = kernel->grad.data();
        for (std::int64_t i = 0; i < m; ++i) {
            const double* gr = gtmp.data() + i * nc;
            for (std::int64_t q = 0; q < k; ++q) {
                const double* cr = col->data() + q * nc;
                double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                std::int64_t j = 0;
                for (; j + 4 <= nc; j += 4) {
                    s0 += gr[j] * cr[j];
                    s1 += gr[j + 1] * cr[j + 1];
                    s2 += gr[j + 2] * cr[j + 2];
                    s3 += gr[j + 3] * cr[j + 3];
                }
                double s = (s0 + s1) + (s2 + s3);
                for (; j < nc; ++j) s += gr[j] * cr[j];
                gw[i * k + q] += s;
            }
        }
        if (!x->needs_grad) return;
        // dcol[k][j] = sum_m w[m][k] * gtmp[m][j], then scatter back to dx.
        std::vector<double> dcol(static_cast<std::size_t>(k * nc), 0.0);
        const double* wv = kernel->value.data();
        for (std::int64_t q = 0; q < k; ++q) {
            double* dr = dcol.data() + q * nc;
            for (std::int64_t i = 0; i < m; ++i) {
                const double a = wv[i * k + q];
                const double* gr = gtmp.data() + i * nc;
                for (std::int64_t j = 0; j < nc; ++j) dr[j] += a * gr[j];
            }
        }
        detail::col2im_add(plan, dcol.data(), x->grad.data());
    };
    return node;
}

/// Learnable per-channel offset: x (B,C,H,W) + bias (1,C,1,1).
inline Var bias_add(const Var& x, const Var& bias) {
    const Shape4 xs = x->value.shape();
    const Shape4 bs = bias->value.shape();
    if (!(bs == Shape4{1, xs.c, 1, 1}))
        throw ShapeError("bias_add: bias " + bs.str() + " does not match input " + xs.str());
    Tensor4 out(xs);
    const std::int64_t spatial = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int b = 0; b < xs.b; ++b)
        for (int c = 0; c < xs.c; ++c) {
            const double bv = bias->value[c];
            const double* src = x->value.data() + (static_cast<std::int64_t>(b) * xs.c + c) * spatial;
            double* dst = out.data() + (static_cast<std::int64_t>(b) * xs.c + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) dst[i] = src[i] + bv;
        }
    Var node = make_var(std::move(out));
    node->parents = {x, bias};
    node->backward_fn = [x, bias, xs, spatial](Node& nd) {
        for (int b = 0; b < xs.b; ++b)
            for (int c = 0; c < xs.c; ++c) {
                const double* g = nd.grad.data() + (static_cast<std::int64_t>(b) * xs.c + c) * spatial;
                double s = 0.0;
                for (std::int64_t i = 0; i < spatial; ++i) s += g[i];
                bias->grad[c] += s;
            }
        if (!x->needs_grad) return;
        const std::int64_t n = nd.grad.size();
        for (std::int64_t i = 0; i < n; ++i) x->grad[i] += nd.grad[i];
    };
    return node;
}

inline Var relu(const Var& x) {
    Tensor4 out(x->value.shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    Var node = make_var(std::move(out));
    node->parents = {x};
    node->backward_fn = [x](Node& nd) {
        const std::int64_t n = nd.grad.size();
        for (std::int64_t i = 0; i < n; ++i)
            if (x->value[i] > 0.0) x->grad[i] += nd.grad[i];
    };
    return node;
}

/// Mean over spatial positions, (B,C,H,W) -> (B,C,1,1).
inline Var global_avg_pool(const Var& x) {
    const std::int64_t spatial = static_cast<std::int64_t>(x->value.h()) * x->value.w();
    if (spatial == 0)
        throw ShapeError("global_avg_pool: empty spatial extent in " + x->value.shape().str());
    Tensor4 out(x->value.b(), x->value.c(), 1, 1);
    const std::int64_t planes = out.size();
    for (std::int64_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) s += x->value[p * spatial + i];
        out[p] = s / static_cast<double>(spatial);
    }
    Var node = make_var(std::move(out));
    node->parents = {x};
    node->backward_fn = [x, spatial](Node& nd) {
        const std::int64_t planes = nd.grad.size();
        for (std::int64_t p = 0; p < planes; ++p) {
            const double g = nd.grad[p] / static_cast<double>(spatial);
            for (std::int64_t i = 0; i < spatial; ++i) x->grad[p * spatial + i] += g;
        }
    };
    return node;
}

/// Affine head: features (B,C,1,1) x weights (K,C,1,1) + bias (1,K,1,1) -> (B,K,1,1).
inline Var linear(const Var& features, const Var& weights, const Var& bias) {
    const Shape4 fs = features->value.shape();
    const Shape4 ws = weights->value.shape();
    const Shape4 bs = bias->value.shape();
    if (fs.h != 1 || fs.w != 1 || ws.h != 1 || ws.w != 1)
        throw ShapeError("linear: expected (B,C,1,1) features and (K,C,1,1) weights, got " +
                         fs.str() + " and " + ws.str());
    if (ws.c != fs.c)
        throw ShapeError("linear: feature width " + fs.str() + " vs weights " + ws.str());
    if (!(bs == Shape4{1, ws.b, 1, 1}))
        throw ShapeError("linear: bias " + bs.str() + " does not match weights " + ws.str());
    const int B = fs.b, C = fs.c, K = ws.b;
    Tensor4 out(B, K, 1, 1);
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
            double s = bias->value[k];
            for (int c = 0; c < C; ++c)
                s += features->value[b * C + c] * weights->value[k * C + c];
            out[b * K + k] = s;
        }
    Var node = make_var(std::move(out));
    node->parents = {features, weights, bias};
    node->backward_fn = [features, weights, bias, B, C, K](Node& nd) {
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < K; ++k) {
                const double g = nd.grad[b * K + k];
                bias->grad[k] += g;
                for (int c = 0; c < C; ++c) {
                    features->grad[b * C + c] += g * weights->value[k * C + c];
                    weights->grad[k * C + c] += g * features->value[b * C + c];
                }
            }
    };
    return node;
}

/// Mean softmax cross-entropy over the batch, with log-sum-exp stabilization.
/// logits (B,K,1,1), labels in [0,K). Returns a scalar node.
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    const Shape4 ls = logits->value.shape();
    if (ls.h != 1 || ls.w != 1)
        throw ShapeError("softmax_cross_entropy: expected (B,K,1,1) logits, got " + ls.str());
    const int B = ls.b, K = ls.c;
    if (static_cast<int>(labels.size()) != B)
        throw ShapeError("softmax_cross_entropy: batch " + std::to_string(B) + " vs " +
                         std::to_string(labels.size()) + " labels");
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * K);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= K)
            throw ValueError("softmax_cross_entropy: label " + std::to_string(y) +
                             " out of range [0," + std::to_string(K) + ")");
        const double* z = logits->value.data() + static_cast<std::int64_t>(b) * K;
        double m = z[0];
        for (int k = 1; k < K; ++k) m = std::max(m, z[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(z[k] - m);
        const double lse = m + std::log(sum);
        for (int k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(z[k] - m) / sum;
        loss += lse - z[y];
    }
    loss /= static_cast<double>(B);
    Var node = make_var(Tensor4::scalar(loss));
    node->parents = {logits};
    std::vector<int> ycopy(labels.begin(), labels.end());
    node->backward_fn = [logits, probs, ycopy = std::move(ycopy), B, K](Node& nd) {
        const double g = nd.grad[0] / static_cast<double>(B);
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < K; ++k)
                logits->grad[b * K + k] +=
                    g * ((*probs)[b * K + k] - (k == ycopy[b] ? 1.0 : 0.0));
    };
    return node;
}

} // namespace stylemix
