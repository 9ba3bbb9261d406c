#pragma once

// Central-difference gradient oracle. The objective is evaluated with a
// reference forward pass written here, not with chd::forward, so the check
// does not share a code path with the implementation under test. It runs in
// long double so the differences are not limited by rounding the objective
// to double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "chd/nn_engine.hpp"
#include "chd/random.hpp"

namespace chd::test {

struct ReferenceOutput {
    std::vector<std::vector<long double>> outputs;  // per sample
    long double penalty = 0.0;                      // summed over samples and layers
    double min_abs_pre = INFINITY;             // closest pre-activation to a ReLU kink
};

inline long double ref_activate(Activation a, long double z) {
    switch (a) {
        case Activation::relu: return z > 0 ? z : 0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::linear: return z;
    }
    return z;
}

inline ReferenceOutput reference_forward(const ParamSet& params, const NetworkSpec& spec, const Matrix& x) {
    ReferenceOutput out;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<long double> a(x.row(i).begin(), x.row(i).end());
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            const auto& s = spec.layers[l];
            const auto& p = params.layers[l];
            std::vector<long double> next(s.out_size);
            for (std::size_t o = 0; o < s.out_size; ++o) {
                long double z = p.bias[o];
                for (std::size_t k = 0; k < s.in_size; ++k) z += p.weight(o, k) * a[k];
                if (s.activation == Activation::relu) {
                    out.min_abs_pre = std::min(out.min_abs_pre, static_cast<double>(std::abs(z)));
                }
                next[o] = ref_activate(s.activation, z);
                out.penalty += s.activity_l2 * next[o] * next[o];
            }
            a = std::move(next);
        }
        out.outputs.push_back(std::move(a));
    }
    return out;
}

/// Mean weighted BCE over the batch plus penalty / batch.
inline long double reference_bce_objective(const ParamSet& params, const NetworkSpec& spec, const Matrix& x,
                                           const std::vector<int>& labels, ClassWeights w) {
    const auto r = reference_forward(params, spec, x);
    long double total = r.penalty;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const long double p = r.outputs[i][0];
        total += labels[i] == 1 ? -w.w1 * std::log(p) : -w.w0 * std::log(1.0 - p);
    }
    return total / static_cast<long double>(labels.size());
}

inline long double reference_distance(const std::vector<long double>& a, const std::vector<long double>& b) {
    long double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(std::max(sq, 1e-12L));
}

/// Mean contrastive loss over the pairs plus both branches' penalty / batch.
inline long double reference_contrastive_objective(const ParamSet& params, const NetworkSpec& spec,
                                                   const Matrix& left, const Matrix& right,
                                                   const std::vector<bool>& similar, double margin,
                                                   std::vector<double>* distances = nullptr) {
    const auto a = reference_forward(params, spec, left);
    const auto b = reference_forward(params, spec, right);
    long double total = a.penalty + b.penalty;
    if (distances) distances->clear();
    for (std::size_t i = 0; i < similar.size(); ++i) {
        const long double d = reference_distance(a.outputs[i], b.outputs[i]);
        if (distances) distances->push_back(static_cast<double>(d));
        const long double gap = std::max(0.0L, margin - d);
        total += similar[i] ? d * d : gap * gap;
    }
    return total / static_cast<long double>(similar.size());
}

/// The 1e-6 floor keeps gradients that are exactly zero from being judged on
/// the truncation error of the difference quotient.
inline double relative_error(double analytic, long double numeric) {
    const long double scale = std::max({std::abs(static_cast<long double>(analytic)), std::abs(numeric), 1e-6L});
    return static_cast<double>(std::abs(analytic - numeric) / scale);
}

/// Largest relative error between `grads` and central differences of
/// `objective` over every weight and bias.
inline double max_gradient_error(ParamSet params, const GradSet& grads,
                                 const std::function<long double(const ParamSet&)>& objective, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto check = [&](double& slot, double analytic) {
            const double saved = slot;
            const double hi = saved + h;
            const double lo = saved - h;
            slot = hi;
            const long double up = objective(params);
            slot = lo;
            const long double down = objective(params);
            slot = saved;
            worst = std::max(worst, relative_error(analytic, (up - down) / (static_cast<long double>(hi) - lo)));
        };
        auto& w = params.layers[l].weight.values();
        for (std::size_t i = 0; i < w.size(); ++i) check(w[i], grads.layers[l].weight.values()[i]);
        auto& b = params.layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i) check(b[i], grads.layers[l].bias[i]);
    }
    return worst;
}

/// Random depth <= 3, width <= 8 network with no dropout. The last layer is
/// `last_activation` with `last_width` units (0 = random width).
inline NetworkSpec random_small_spec(Rng& rng, bool activity_l2, Activation last_activation, std::size_t last_width) {
    std::uniform_int_distribution<std::size_t> width(1, 8);
    std::uniform_int_distribution<std::size_t> depth(1, 3);
    std::uniform_int_distribution<int> act(0, 2);
    const std::size_t layers = depth(rng);
    NetworkSpec spec;
    std::size_t in = width(rng);
    for (std::size_t l = 0; l < layers; ++l) {
        const bool last = l + 1 == layers;
        const std::size_t out = last ? (last_width ? last_width : width(rng)) : width(rng);
        const Activation a = last ? last_activation : static_cast<Activation>(act(rng));
        spec.layers.push_back({in, out, a, 0.0, activity_l2 ? 0.05 : 0.0});
        in = out;
    }
    return spec;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = n(rng);
    return m;
}

/// Random nonzero biases so ReLU units are not all aligned at zero.
inline void jitter_biases(ParamSet& params, Rng& rng) {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& l : params.layers) {
        for (double& b : l.bias) b = u(rng);
    }
}

}  // namespace chd::test
