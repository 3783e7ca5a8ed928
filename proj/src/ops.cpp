#include "segreg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segreg {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    format_shape(a.shape()) + " vs " + format_shape(b.shape()));
    }
}

void require_4d(const Tensor& t, const char* op) {
    if (t.shape().size() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected a 4-d tensor, got " +
                                    format_shape(t.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor r = op_result(a.shape(), std::move(out), {a, b});
    if (r.requires_grad()) {
        auto on = r.node(), an = a.node(), bn = b.node();
        record_op(r, {a, b}, [on, an, bn] {
            const auto& og = on->grad;
            if (wants_grad(an)) {
                auto& g = ensure_grad(an);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
            }
        });
    }
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor r = op_result(a.shape(), std::move(out), {a, b});
    if (r.requires_grad()) {
        auto on = r.node(), an = a.node(), bn = b.node();
        record_op(r, {a, b}, [on, an, bn] {
            const auto& og = on->grad;
            if (wants_grad(an)) {
                auto& g = ensure_grad(an);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] -= og[i];
            }
        });
    }
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor r = op_result(a.shape(), std::move(out), {a, b});
    if (r.requires_grad()) {
        auto on = r.node(), an = a.node(), bn = b.node();
        record_op(r, {a, b}, [on, an, bn] {
            const auto& og = on->grad;
            if (wants_grad(an)) {
                auto& g = ensure_grad(an);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * bn->data[i];
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * an->data[i];
            }
        });
    }
    return r;
}

Tensor scale(const Tensor& t, double factor) {
    std::vector<double> out(t.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i] * factor;
    Tensor r = op_result(t.shape(), std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, factor] {
            const auto& og = on->grad;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * factor;
            }
        });
    }
    return r;
}

Tensor sum(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v;
    Tensor r = op_result({}, {acc}, {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn] {
            double og = on->grad[0];
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (auto& v : g) v += og;
            }
        });
    }
    return r;
}

Tensor mean(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v;
    double inv = 1.0 / static_cast<double>(t.data().size());
    Tensor r = op_result({}, {acc * inv}, {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, inv] {
            double og = on->grad[0] * inv;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (auto& v : g) v += og;
            }
        });
    }
    return r;
}

Tensor relu(const Tensor& t) {
    std::vector<double> out(t.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i] > 0.0 ? t.data()[i] : 0.0;
    Tensor r = op_result(t.shape(), std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn] {
            const auto& og = on->grad;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (std::size_t i = 0; i < og.size(); ++i) {
                    if (tn->data[i] > 0.0) g[i] += og[i];
                }
            }
        });
    }
    return r;
}

Tensor leaky_relu(const Tensor& t, double slope) {
    std::vector<double> out(t.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = t.data()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    Tensor r = op_result(t.shape(), std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, slope] {
            const auto& og = on->grad;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (std::size_t i = 0; i < og.size(); ++i) {
                    g[i] += og[i] * (tn->data[i] > 0.0 ? 1.0 : slope);
                }
            }
        });
    }
    return r;
}

Tensor sigmoid(const Tensor& t) {
    std::vector<double> out(t.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = t.data()[i];
        // overflow-safe in both tails
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
    }
    Tensor r = op_result(t.shape(), std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn] {
            const auto& og = on->grad;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (std::size_t i = 0; i < og.size(); ++i) {
                    double y = on->data[i];
                    g[i] += og[i] * y * (1.0 - y);
                }
            }
        });
    }
    return r;
}

Tensor softmax_channels(const Tensor& t) {
    require_4d(t, "softmax_channels");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    if (c < 1) throw std::invalid_argument("softmax_channels: channel axis must have extent >= 1");
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t cstride = plane;
    const std::size_t nstride = static_cast<std::size_t>(c) * plane;
    std::vector<double> out(t.data().size());
    const auto& x = t.data();
    for (int in = 0; in < n; ++in) {
        for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t base = in * nstride + p;
            double mx = x[base];
            for (int ic = 1; ic < c; ++ic) mx = std::max(mx, x[base + ic * cstride]);
            double z = 0.0;
            for (int ic = 0; ic < c; ++ic) {
                double e = std::exp(x[base + ic * cstride] - mx);
                out[base + ic * cstride] = e;
                z += e;
            }
            double inv = 1.0 / z;
            for (int ic = 0; ic < c; ++ic) out[base + ic * cstride] *= inv;
        }
    }
    Tensor r = op_result(t.shape(), std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, n, c, plane, cstride, nstride] {
            if (!wants_grad(tn)) return;
            const auto& og = on->grad;
            const auto& y = on->data;
            auto& g = ensure_grad(tn);
            for (int in = 0; in < n; ++in) {
                for (std::size_t p = 0; p < plane; ++p) {
                    const std::size_t base = in * nstride + p;
                    double dot = 0.0;
                    for (int ic = 0; ic < c; ++ic) {
                        std::size_t idx = base + ic * cstride;
                        dot += og[idx] * y[idx];
                    }
                    for (int ic = 0; ic < c; ++ic) {
                        std::size_t idx = base + ic * cstride;
                        g[idx] += y[idx] * (og[idx] - dot);
                    }
                }
            }
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

// Zero-padded copy of one sample's channel planes.
void pad_sample(const double* src, int cin, int h, int w, int pad, std::vector<double>& dst) {
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    std::fill(dst.begin(), dst.end(), 0.0);
    for (int ci = 0; ci < cin; ++ci) {
        const double* s = src + static_cast<std::size_t>(ci) * h * w;
        double* d = dst.data() + static_cast<std::size_t>(ci) * hp * wp;
        for (int y = 0; y < h; ++y) {
            std::copy(s + static_cast<std::size_t>(y) * w, s + static_cast<std::size_t>(y + 1) * w,
                      d + static_cast<std::size_t>(y + pad) * wp + pad);
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
    require_4d(input, "conv2d");
    require_4d(kernel, "conv2d kernel");
    const int n = input.extent(0), cin = input.extent(1), h = input.extent(2), w = input.extent(3);
    const int cout = kernel.extent(0), kcin = kernel.extent(1), kh = kernel.extent(2), kw = kernel.extent(3);
    if (kh != kw || kh % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel must be square with odd extent, got " +
                                    format_shape(kernel.shape()));
    }
    if (kcin != cin) {
        throw std::invalid_argument("conv2d: input channels " + format_shape(input.shape()) +
                                    " do not match kernel " + format_shape(kernel.shape()));
    }
    if (bias.shape() != std::vector<int>{cout}) {
        throw std::invalid_argument("conv2d: bias shape " + format_shape(bias.shape()) +
                                    " does not match Cout=" + std::to_string(cout));
    }
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    const int hp = h + 2 * padding, wp = w + 2 * padding;
    if (hp < kh || wp < kw) throw std::invalid_argument("conv2d: kernel larger than padded input");
    const int oh = (hp - kh) / stride + 1;
    const int ow = (wp - kw) / stride + 1;

    const auto& x = input.data();
    const auto& k = kernel.data();
    const auto& b = bias.data();
    std::vector<double> out(static_cast<std::size_t>(n) * cout * oh * ow);
    std::vector<double> xp(static_cast<std::size_t>(cin) * hp * wp);
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;

    // blocks of four output channels share one pass over each source row
    for (int in = 0; in < n; ++in) {
        pad_sample(x.data() + static_cast<std::size_t>(in) * cin * h * w, cin, h, w, padding, xp);
        for (int co0 = 0; co0 < cout; co0 += 4) {
            const int nb = std::min(4, cout - co0);
            double* o[4];
            for (int j = 0; j < nb; ++j) {
                o[j] = out.data() + (static_cast<std::size_t>(in) * cout + co0 + j) * oplane;
                std::fill(o[j], o[j] + oplane, b[co0 + j]);
            }
            for (int ci = 0; ci < cin; ++ci) {
                const double* xc = xp.data() + static_cast<std::size_t>(ci) * hp * wp;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const std::size_t kat = (static_cast<std::size_t>(ci) * kh + ky) * kw + kx;
                        if (nb == 4) {
                            const double w0 = k[(static_cast<std::size_t>(co0) * cin) * kh * kw + kat];
                            const double w1 = k[(static_cast<std::size_t>(co0 + 1) * cin) * kh * kw + kat];
                            const double w2 = k[(static_cast<std::size_t>(co0 + 2) * cin) * kh * kw + kat];
                            const double w3 = k[(static_cast<std::size_t>(co0 + 3) * cin) * kh * kw + kat];
                            for (int oy = 0; oy < oh; ++oy) {
                                const double* __restrict__ srow =
                                    xc + static_cast<std::size_t>(oy * stride + ky) * wp + kx;
                                double* __restrict__ r0 = o[0] + static_cast<std::size_t>(oy) * ow;
                                double* __restrict__ r1 = o[1] + static_cast<std::size_t>(oy) * ow;
                                double* __restrict__ r2 = o[2] + static_cast<std::size_t>(oy) * ow;
                                double* __restrict__ r3 = o[3] + static_cast<std::size_t>(oy) * ow;
                                if (stride == 1) {
                                    for (int ox = 0; ox < ow; ++ox) {
                                        const double s = srow[ox];
                                        r0[ox] += w0 * s;
                                        r1[ox] += w1 * s;
                                        r2[ox] += w2 * s;
                                        r3[ox] += w3 * s;
                                    }
                                } else {
                                    for (int ox = 0; ox < ow; ++ox) {
                                        const double s = srow[ox * stride];
                                        r0[ox] += w0 * s;
                                        r1[ox] += w1 * s;
                                        r2[ox] += w2 * s;
                                        r3[ox] += w3 * s;
                                    }
                                }
                            }
                        } else {
                            for (int j = 0; j < nb; ++j) {
                                const double wgt =
                                    k[(static_cast<std::size_t>(co0 + j) * cin) * kh * kw + kat];
                                for (int oy = 0; oy < oh; ++oy) {
                                    const double* srow =
                                        xc + static_cast<std::size_t>(oy * stride + ky) * wp + kx;
                                    double* orow = o[j] + static_cast<std::size_t>(oy) * ow;
                                    for (int ox = 0; ox < ow; ++ox) orow[ox] += wgt * srow[ox * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor r = op_result({n, cout, oh, ow}, std::move(out), {input, kernel, bias});
    if (r.requires_grad()) {
        auto on = r.node(), xn = input.node(), kn = kernel.node(), bn = bias.node();
        record_op(r, {input, kernel, bias}, [on, xn, kn, bn, n, cin, h, w, cout, kh, kw, stride,
                                             padding, hp, wp, oh, ow] {
            const auto& og = on->grad;
            // bias: sum over batch and map
            if (wants_grad(bn)) {
                auto& gb = ensure_grad(bn);
                for (int in = 0; in < n; ++in) {
                    for (int co = 0; co < cout; ++co) {
                        const double* o = og.data() + (static_cast<std::size_t>(in) * cout + co) * oh * ow;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) acc += o[i];
                        gb[co] += acc;
                    }
                }
            }
            const bool want_x = wants_grad(xn);
            const bool want_k = wants_grad(kn);
            if (!want_x && !want_k) return;
            std::vector<double> xp(static_cast<std::size_t>(cin) * hp * wp);
            std::vector<double> gxp(want_x ? xp.size() : 0);
            auto* gx = want_x ? &ensure_grad(xn) : nullptr;
            auto* gk = want_k ? &ensure_grad(kn) : nullptr;
            const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
            for (int in = 0; in < n; ++in) {
                if (want_k) {
                    pad_sample(xn->data.data() + static_cast<std::size_t>(in) * cin * h * w,
                               cin, h, w, padding, xp);
                }
                if (want_x) std::fill(gxp.begin(), gxp.end(), 0.0);
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xc = xp.data() + static_cast<std::size_t>(ci) * hp * wp;
                    double* gxc = want_x ? gxp.data() + static_cast<std::size_t>(ci) * hp * wp : nullptr;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const std::size_t kat = (static_cast<std::size_t>(ci) * kh + ky) * kw + kx;
                            for (int co0 = 0; co0 < cout; co0 += 4) {
                                const int nb = std::min(4, cout - co0);
                                if (nb == 4) {
                                    const std::size_t kw_sz = static_cast<std::size_t>(kh) * kw;
                                    const std::size_t k0 = static_cast<std::size_t>(co0) * cin * kw_sz + kat;
                                    const std::size_t k1 = k0 + cin * kw_sz;
                                    const std::size_t k2 = k1 + cin * kw_sz;
                                    const std::size_t k3 = k2 + cin * kw_sz;
                                    const double w0 = kn->data[k0], w1 = kn->data[k1];
                                    const double w2 = kn->data[k2], w3 = kn->data[k3];
                                    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                                    for (int oy = 0; oy < oh; ++oy) {
                                        const double* __restrict__ d0 = og.data() +
                                            (static_cast<std::size_t>(in) * cout + co0) * oplane +
                                            static_cast<std::size_t>(oy) * ow;
                                        const double* __restrict__ d1 = d0 + oplane;
                                        const double* __restrict__ d2 = d1 + oplane;
                                        const double* __restrict__ d3 = d2 + oplane;
                                        const std::size_t sidx =
                                            static_cast<std::size_t>(oy * stride + ky) * wp + kx;
                                        if (want_k) {
                                            const double* __restrict__ xrow = xc + sidx;
                                            if (stride == 1) {
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    const double s = xrow[ox];
                                                    a0 += d0[ox] * s;
                                                    a1 += d1[ox] * s;
                                                    a2 += d2[ox] * s;
                                                    a3 += d3[ox] * s;
                                                }
                                            } else {
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    const double s = xrow[ox * stride];
                                                    a0 += d0[ox] * s;
                                                    a1 += d1[ox] * s;
                                                    a2 += d2[ox] * s;
                                                    a3 += d3[ox] * s;
                                                }
                                            }
                                        }
                                        if (want_x) {
                                            double* __restrict__ grow = gxc + sidx;
                                            if (stride == 1) {
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    grow[ox] += w0 * d0[ox] + w1 * d1[ox] +
                                                                w2 * d2[ox] + w3 * d3[ox];
                                                }
                                            } else {
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    grow[ox * stride] += w0 * d0[ox] + w1 * d1[ox] +
                                                                         w2 * d2[ox] + w3 * d3[ox];
                                                }
                                            }
                                        }
                                    }
                                    if (want_k) {
                                        (*gk)[k0] += a0;
                                        (*gk)[k1] += a1;
                                        (*gk)[k2] += a2;
                                        (*gk)[k3] += a3;
                                    }
                                } else {
                                    for (int j = 0; j < nb; ++j) {
                                        const std::size_t kidx =
                                            (static_cast<std::size_t>(co0 + j) * cin) *
                                                static_cast<std::size_t>(kh) * kw + kat;
                                        const double wgt = kn->data[kidx];
                                        double acc = 0.0;
                                        for (int oy = 0; oy < oh; ++oy) {
                                            const double* orow = og.data() +
                                                (static_cast<std::size_t>(in) * cout + co0 + j) * oplane +
                                                static_cast<std::size_t>(oy) * ow;
                                            const std::size_t sidx =
                                                static_cast<std::size_t>(oy * stride + ky) * wp + kx;
                                            if (want_k) {
                                                const double* xrow = xc + sidx;
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    acc += orow[ox] * xrow[ox * stride];
                                                }
                                            }
                                            if (want_x) {
                                                double* grow = gxc + sidx;
                                                for (int ox = 0; ox < ow; ++ox) {
                                                    grow[ox * stride] += wgt * orow[ox];
                                                }
                                            }
                                        }
                                        if (want_k) (*gk)[kidx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if (want_x) {
                    // crop the padded gradient back onto the input
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* s = gxp.data() + static_cast<std::size_t>(ci) * hp * wp;
                        double* d = gx->data() + (static_cast<std::size_t>(in) * cin + ci) * h * w;
                        for (int y = 0; y < h; ++y) {
                            const double* srow = s + static_cast<std::size_t>(y + padding) * wp + padding;
                            double* drow = d + static_cast<std::size_t>(y) * w;
                            for (int xcol = 0; xcol < w; ++xcol) drow[xcol] += srow[xcol];
                        }
                    }
                }
            }
        });
    }
    return r;
}

Tensor maxpool2(const Tensor& t) {
    require_4d(t, "maxpool2");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("maxpool2: spatial extents must be even, got " + format_shape(t.shape()));
    }
    const int oh = h / 2, ow = w / 2;
    const auto& x = t.data();
    std::vector<double> out(static_cast<std::size_t>(n) * c * oh * ow);
    std::vector<std::uint32_t> argmax(out.size());
    for (int nc = 0; nc < n * c; ++nc) {
        const double* xc = x.data() + static_cast<std::size_t>(nc) * h * w;
        double* o = out.data() + static_cast<std::size_t>(nc) * oh * ow;
        std::uint32_t* am = argmax.data() + static_cast<std::size_t>(nc) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                // first index in scan order wins ties
                std::uint32_t best = static_cast<std::uint32_t>((2 * oy) * w + 2 * ox);
                double bv = xc[best];
                const std::uint32_t cands[3] = {best + 1,
                                                static_cast<std::uint32_t>((2 * oy + 1) * w + 2 * ox),
                                                static_cast<std::uint32_t>((2 * oy + 1) * w + 2 * ox + 1)};
                for (std::uint32_t idx : cands) {
                    if (xc[idx] > bv) { bv = xc[idx]; best = idx; }
                }
                o[oy * ow + ox] = bv;
                am[oy * ow + ox] = best;
            }
        }
    }
    Tensor r = op_result({n, c, oh, ow}, std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, n, c, h, w, oh, ow, argmax = std::move(argmax)] {
            if (!wants_grad(tn)) return;
            const auto& og = on->grad;
            auto& g = ensure_grad(tn);
            for (int nc = 0; nc < n * c; ++nc) {
                const double* o = og.data() + static_cast<std::size_t>(nc) * oh * ow;
                const std::uint32_t* am = argmax.data() + static_cast<std::size_t>(nc) * oh * ow;
                double* gc = g.data() + static_cast<std::size_t>(nc) * h * w;
                for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) gc[am[i]] += o[i];
            }
        });
    }
    return r;
}

Tensor upsample2(const Tensor& t) {
    require_4d(t, "upsample2");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    const int oh = 2 * h, ow = 2 * w;
    const auto& x = t.data();
    std::vector<double> out(static_cast<std::size_t>(n) * c * oh * ow);
    for (int nc = 0; nc < n * c; ++nc) {
        const double* xc = x.data() + static_cast<std::size_t>(nc) * h * w;
        double* o = out.data() + static_cast<std::size_t>(nc) * oh * ow;
        for (int y = 0; y < h; ++y) {
            for (int xcol = 0; xcol < w; ++xcol) {
                double v = xc[y * w + xcol];
                double* base = o + static_cast<std::size_t>(2 * y) * ow + 2 * xcol;
                base[0] = base[1] = base[ow] = base[ow + 1] = v;
            }
        }
    }
    Tensor r = op_result({n, c, oh, ow}, std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, n, c, h, w, oh, ow] {
            if (!wants_grad(tn)) return;
            const auto& og = on->grad;
            auto& g = ensure_grad(tn);
            for (int nc = 0; nc < n * c; ++nc) {
                const double* o = og.data() + static_cast<std::size_t>(nc) * oh * ow;
                double* gc = g.data() + static_cast<std::size_t>(nc) * h * w;
                for (int y = 0; y < h; ++y) {
                    for (int xcol = 0; xcol < w; ++xcol) {
                        const double* base = o + static_cast<std::size_t>(2 * y) * ow + 2 * xcol;
                        gc[y * w + xcol] += base[0] + base[1] + base[ow] + base[ow + 1];
                    }
                }
            }
        });
    }
    return r;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_4d(a, "concat_channels");
    require_4d(b, "concat_channels");
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3)) {
        throw std::invalid_argument("concat_channels: non-channel extents differ, " +
                                    format_shape(a.shape()) + " vs " + format_shape(b.shape()));
    }
    const int n = a.extent(0), ca = a.extent(1), cb = b.extent(1), h = a.extent(2), w = a.extent(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * (ca + cb) * plane);
    for (int in = 0; in < n; ++in) {
        std::copy(a.data().begin() + in * ca * plane, a.data().begin() + (in + 1) * ca * plane,
                  out.begin() + static_cast<std::size_t>(in) * (ca + cb) * plane);
        std::copy(b.data().begin() + in * cb * plane, b.data().begin() + (in + 1) * cb * plane,
                  out.begin() + static_cast<std::size_t>(in) * (ca + cb) * plane + ca * plane);
    }
    Tensor r = op_result({n, ca + cb, h, w}, std::move(out), {a, b});
    if (r.requires_grad()) {
        auto on = r.node(), an = a.node(), bn = b.node();
        record_op(r, {a, b}, [on, an, bn, n, ca, cb, plane] {
            const auto& og = on->grad;
            if (wants_grad(an)) {
                auto& g = ensure_grad(an);
                for (int in = 0; in < n; ++in) {
                    const double* s = og.data() + static_cast<std::size_t>(in) * (ca + cb) * plane;
                    double* d = g.data() + static_cast<std::size_t>(in) * ca * plane;
                    for (std::size_t i = 0; i < ca * plane; ++i) d[i] += s[i];
                }
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (int in = 0; in < n; ++in) {
                    const double* s = og.data() + static_cast<std::size_t>(in) * (ca + cb) * plane + ca * plane;
                    double* d = g.data() + static_cast<std::size_t>(in) * cb * plane;
                    for (std::size_t i = 0; i < cb * plane; ++i) d[i] += s[i];
                }
            }
        });
    }
    return r;
}

Tensor slice_channels(const Tensor& t, int first, int count) {
    require_4d(t, "slice_channels");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    if (first < 0 || count < 1 || first + count > c) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(first) + "," +
                                    std::to_string(first + count) + ") out of " + std::to_string(c));
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * count * plane);
    for (int in = 0; in < n; ++in) {
        std::copy(t.data().begin() + (static_cast<std::size_t>(in) * c + first) * plane,
                  t.data().begin() + (static_cast<std::size_t>(in) * c + first + count) * plane,
                  out.begin() + static_cast<std::size_t>(in) * count * plane);
    }
    Tensor r = op_result({n, count, h, w}, std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, n, c, first, count, plane] {
            if (!wants_grad(tn)) return;
            const auto& og = on->grad;
            auto& g = ensure_grad(tn);
            for (int in = 0; in < n; ++in) {
                const double* s = og.data() + static_cast<std::size_t>(in) * count * plane;
                double* d = g.data() + (static_cast<std::size_t>(in) * c + first) * plane;
                for (std::size_t i = 0; i < count * plane; ++i) d[i] += s[i];
            }
        });
    }
    return r;
}

Tensor global_max_pool(const Tensor& t) {
    require_4d(t, "global_max_pool");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * c);
    std::vector<std::uint32_t> argmax(out.size());
    for (int nc = 0; nc < n * c; ++nc) {
        const double* xc = t.data().data() + static_cast<std::size_t>(nc) * plane;
        std::uint32_t best = 0;
        double bv = xc[0];
        for (std::size_t i = 1; i < plane; ++i) {
            if (xc[i] > bv) { bv = xc[i]; best = static_cast<std::uint32_t>(i); }
        }
        out[nc] = bv;
        argmax[nc] = best;
    }
    Tensor r = op_result({n, c}, std::move(out), {t});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node();
        record_op(r, {t}, [on, tn, n, c, plane, argmax = std::move(argmax)] {
            if (!wants_grad(tn)) return;
            const auto& og = on->grad;
            auto& g = ensure_grad(tn);
            for (int nc = 0; nc < n * c; ++nc) g[static_cast<std::size_t>(nc) * plane + argmax[nc]] += og[nc];
        });
    }
    return r;
}

Tensor dense(const Tensor& t, const Tensor& weight, const Tensor& bias) {
    if (t.shape().size() != 2 || weight.shape().size() != 2) {
        throw std::invalid_argument("dense: expected 2-d input and weight, got " +
                                    format_shape(t.shape()) + " and " + format_shape(weight.shape()));
    }
    const int n = t.extent(0), f = t.extent(1), fo = weight.extent(0), o = weight.extent(1);
    if (f != fo || bias.shape() != std::vector<int>{o}) {
        throw std::invalid_argument("dense: shape mismatch " + format_shape(t.shape()) + " x " +
                                    format_shape(weight.shape()) + " + " + format_shape(bias.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(n) * o);
    for (int in = 0; in < n; ++in) {
        for (int io = 0; io < o; ++io) {
            double acc = bias.data()[io];
            for (int k = 0; k < f; ++k) acc += t.data()[in * f + k] * weight.data()[k * o + io];
            out[in * o + io] = acc;
        }
    }
    Tensor r = op_result({n, o}, std::move(out), {t, weight, bias});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node(), wn = weight.node(), bn = bias.node();
        record_op(r, {t, weight, bias}, [on, tn, wn, bn, n, f, o] {
            const auto& og = on->grad;
            if (wants_grad(tn)) {
                auto& g = ensure_grad(tn);
                for (int in = 0; in < n; ++in)
                    for (int k = 0; k < f; ++k) {
                        double acc = 0.0;
                        for (int io = 0; io < o; ++io) acc += og[in * o + io] * wn->data[k * o + io];
                        g[in * f + k] += acc;
                    }
            }
            if (wants_grad(wn)) {
                auto& g = ensure_grad(wn);
                for (int k = 0; k < f; ++k)
                    for (int io = 0; io < o; ++io) {
                        double acc = 0.0;
                        for (int in = 0; in < n; ++in) acc += tn->data[in * f + k] * og[in * o + io];
                        g[k * o + io] += acc;
                    }
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (int in = 0; in < n; ++in)
                    for (int io = 0; io < o; ++io) g[io] += og[in * o + io];
            }
        });
    }
    return r;
}

Tensor batch_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode) {
    require_4d(t, "batch_norm");
    const int n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    if (gamma.shape() != std::vector<int>{c} || beta.shape() != std::vector<int>{c}) {
        throw std::invalid_argument("batch_norm: gamma/beta must be [C]=" + std::to_string(c));
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;  // per-channel sample count
    const double eps = state.eps;

    std::vector<double> mu(c), var(c);
    if (mode == Mode::kTrain) {
        for (int ic = 0; ic < c; ++ic) {
            double s = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* xc = t.data().data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += xc[i];
            }
            mu[ic] = s / static_cast<double>(m);
            double v = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* xc = t.data().data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    double d = xc[i] - mu[ic];
                    v += d * d;
                }
            }
            var[ic] = v / static_cast<double>(m);
        }
        if (!state.initialized) {
            state.running_mean = mu;
            state.running_var = var;
            state.initialized = true;
        } else {
            for (int ic = 0; ic < c; ++ic) {
                state.running_mean[ic] = state.momentum * state.running_mean[ic] + (1.0 - state.momentum) * mu[ic];
                state.running_var[ic] = state.momentum * state.running_var[ic] + (1.0 - state.momentum) * var[ic];
            }
        }
    } else {
        if (!state.initialized) {
            throw std::invalid_argument("batch_norm: eval mode requires populated running moments");
        }
        mu = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_sd(c);
    for (int ic = 0; ic < c; ++ic) inv_sd[ic] = 1.0 / std::sqrt(var[ic] + eps);

    std::vector<double> out(t.data().size());
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const double* xc = t.data().data() + (static_cast<std::size_t>(in) * c + ic) * plane;
            double* o = out.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
            const double a = gamma.data()[ic] * inv_sd[ic];
            const double b = beta.data()[ic] - a * mu[ic];
            for (std::size_t i = 0; i < plane; ++i) o[i] = a * xc[i] + b;
        }
    }

    Tensor r = op_result(t.shape(), std::move(out), {t, gamma, beta});
    if (r.requires_grad()) {
        auto on = r.node(), tn = t.node(), gn = gamma.node(), bn = beta.node();
        const bool train = mode == Mode::kTrain;
        record_op(r, {t, gamma, beta}, [on, tn, gn, bn, n, c, plane, m, train,
                                        mu = std::move(mu), inv_sd = std::move(inv_sd)] {
            const auto& og = on->grad;
            for (int ic = 0; ic < c; ++ic) {
                const double isd = inv_sd[ic];
                const double gam = gn->data[ic];
                // channel-wide sums
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int in = 0; in < n; ++in) {
                    const double* oc = og.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                    const double* xc = tn->data.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += oc[i];
                        sum_dy_xhat += oc[i] * (xc[i] - mu[ic]) * isd;
                    }
                }
                if (wants_grad(gn)) ensure_grad(gn)[ic] += sum_dy_xhat;
                if (wants_grad(bn)) ensure_grad(bn)[ic] += sum_dy;
                if (wants_grad(tn)) {
                    auto& g = ensure_grad(tn);
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (int in = 0; in < n; ++in) {
                        const double* oc = og.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                        const double* xc = tn->data.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                        double* gc = g.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
                        if (train) {
                            for (std::size_t i = 0; i < plane; ++i) {
                                double xhat = (xc[i] - mu[ic]) * isd;
                                gc[i] += gam * isd * (oc[i] - inv_m * sum_dy - inv_m * xhat * sum_dy_xhat);
                            }
                        } else {
                            for (std::size_t i = 0; i < plane; ++i) gc[i] += gam * isd * oc[i];
                        }
                    }
                }
            }
        });
    }
    return r;
}

}  // namespace segreg
