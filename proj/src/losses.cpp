#include "segreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segreg {

Tensor dice_loss(const Tensor& y_hat, const Tensor& y) {
    if (y_hat.shape() != y.shape() || y_hat.shape().size() != 4) {
        throw std::invalid_argument("dice_loss: expected matching 4-d tensors, got " +
                                    format_shape(y_hat.shape()) + " vs " + format_shape(y.shape()));
    }
    const int n = y_hat.extent(0), c = y_hat.extent(1);
    const std::size_t plane = static_cast<std::size_t>(y_hat.extent(2)) * y_hat.extent(3);
    const auto& p = y_hat.data();
    const auto& g = y.data();

    // per (n,c): numerator 2*sum(p*g), denominator sum(p)+sum(g)
    std::vector<double> num(static_cast<std::size_t>(n) * c), den(num.size());
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const std::size_t base = (static_cast<std::size_t>(in) * c + ic) * plane;
            double s_pg = 0.0, s_p = 0.0, s_g = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                s_pg += p[base + i] * g[base + i];
                s_p += p[base + i];
                s_g += g[base + i];
            }
            num[in * c + ic] = 2.0 * s_pg;
            den[in * c + ic] = s_p + s_g;
        }
    }
    double loss = 0.0;
    for (int in = 0; in < n; ++in) {
        double dice = 0.0;
        for (int ic = 0; ic < c; ++ic) dice += num[in * c + ic] / (den[in * c + ic] + kDiceEps);
        loss += 1.0 - dice / static_cast<double>(c);
    }
    loss /= static_cast<double>(n);

    Tensor r = op_result({}, {loss}, {y_hat, y});
    if (r.requires_grad()) {
        auto on = r.node(), pn = y_hat.node(), gn = y.node();
        record_op(r, {y_hat, y}, [on, pn, gn, n, c, plane, num = std::move(num), den = std::move(den)] {
            const double og = on->grad[0];
            const double w = og / (static_cast<double>(n) * c);
            for (int in = 0; in < n; ++in) {
                for (int ic = 0; ic < c; ++ic) {
                    const std::size_t base = (static_cast<std::size_t>(in) * c + ic) * plane;
                    const double d = den[in * c + ic] + kDiceEps;
                    const double nm = num[in * c + ic];
                    if (wants_grad(pn)) {
                        auto& gp = ensure_grad(pn);
                        for (std::size_t i = 0; i < plane; ++i) {
                            gp[base + i] -= w * (2.0 * gn->data[base + i] * d - nm) / (d * d);
                        }
                    }
                    if (wants_grad(gn)) {
                        auto& gg = ensure_grad(gn);
                        for (std::size_t i = 0; i < plane; ++i) {
                            gg[base + i] -= w * (2.0 * pn->data[base + i] * d - nm) / (d * d);
                        }
                    }
                }
            }
        });
    }
    return r;
}

Tensor sum_squared_difference(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("sum_squared_difference: shape mismatch " +
                                    format_shape(a.shape()) + " vs " + format_shape(b.shape()));
    }
    const double inv_n = a.shape().empty() ? 1.0 : 1.0 / static_cast<double>(a.extent(0));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    Tensor r = op_result({}, {acc * inv_n}, {a, b});
    if (r.requires_grad()) {
        auto on = r.node(), an = a.node(), bn = b.node();
        record_op(r, {a, b}, [on, an, bn, inv_n] {
            const double og = on->grad[0] * inv_n;
            if (wants_grad(an)) {
                auto& g = ensure_grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += og * 2.0 * (an->data[i] - bn->data[i]);
            }
            if (wants_grad(bn)) {
                auto& g = ensure_grad(bn);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= og * 2.0 * (an->data[i] - bn->data[i]);
            }
        });
    }
    return r;
}

namespace {
inline double clamp_unit(double v) { return std::min(std::max(v, kLogClamp), 1.0 - kLogClamp); }
inline bool clamped(double v) { return v <= kLogClamp || v >= 1.0 - kLogClamp; }
}  // namespace

Tensor disc_loss(const Tensor& d_fake, const Tensor& d_real) {
    if (d_fake.shape() != d_real.shape()) {
        throw std::invalid_argument("disc_loss: shape mismatch " + format_shape(d_fake.shape()) +
                                    " vs " + format_shape(d_real.shape()));
    }
    const std::size_t count = d_fake.data().size();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        acc += -std::log(1.0 - clamp_unit(d_fake.data()[i])) - std::log(clamp_unit(d_real.data()[i]));
    }
    const double inv = 1.0 / static_cast<double>(count);
    Tensor r = op_result({}, {acc * inv}, {d_fake, d_real});
    if (r.requires_grad()) {
        auto on = r.node(), fn = d_fake.node(), rn = d_real.node();
        record_op(r, {d_fake, d_real}, [on, fn, rn, inv] {
            const double og = on->grad[0] * inv;
            if (wants_grad(fn)) {
                auto& g = ensure_grad(fn);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!clamped(fn->data[i])) g[i] += og / (1.0 - fn->data[i]);
                }
            }
            if (wants_grad(rn)) {
                auto& g = ensure_grad(rn);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!clamped(rn->data[i])) g[i] -= og / rn->data[i];
                }
            }
        });
    }
    return r;
}

Tensor adv_loss(const Tensor& d_fake) {
    const std::size_t count = d_fake.data().size();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += -std::log(clamp_unit(d_fake.data()[i]));
    const double inv = 1.0 / static_cast<double>(count);
    Tensor r = op_result({}, {acc * inv}, {d_fake});
    if (r.requires_grad()) {
        auto on = r.node(), fn = d_fake.node();
        record_op(r, {d_fake}, [on, fn, inv] {
            const double og = on->grad[0] * inv;
            if (wants_grad(fn)) {
                auto& g = ensure_grad(fn);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!clamped(fn->data[i])) g[i] -= og / fn->data[i];
                }
            }
        });
    }
    return r;
}

}  // namespace segreg
