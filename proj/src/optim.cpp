#include "segreg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace segreg {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].data().size(), 0.0);
            state.v[i].assign(params[i].data().size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state tracks a different parameter list");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].data();
        if (state.m[i].size() != p.size()) {
            throw std::invalid_argument("adam_step: moment array shape drifted from its parameter");
        }
        const bool has = params[i].has_grad();
        const std::vector<double>* g = has ? &params[i].grad() : nullptr;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = has ? (*g)[j] : 0.0;
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.eps);
        }
    }
}

void zero_grads(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace segreg
