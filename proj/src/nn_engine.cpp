#include "chd/nn_engine.hpp"

#include <algorithm>
#include <cmath>

#include "chd/error.hpp"

namespace chd {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "linear") return Activation::linear;
    throw ConfigError("unknown activation '" + s + "'");
}

const char* to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "rmsprop";
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.in_size == 0 || layer.out_size == 0) {
            throw DimensionError("layer " + std::to_string(l) + " has a zero size");
        }
        if (!(layer.dropout_rate >= 0.0 && layer.dropout_rate < 1.0)) {
            throw ConfigError("layer " + std::to_string(l) + " dropout must lie in [0, 1)");
        }
        if (!(layer.activity_l2 >= 0.0)) {
            throw ConfigError("layer " + std::to_string(l) + " activity_l2 must be nonnegative");
        }
        if (l > 0 && layers[l - 1].out_size != layer.in_size) {
            throw DimensionError("layer " + std::to_string(l) + " input " + std::to_string(layer.in_size) +
                                 " does not match previous output " + std::to_string(layers[l - 1].out_size));
        }
    }
}

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

bool ParamSet::all_finite() const {
    for (const auto& l : layers) {
        for (double v : l.weight.values()) {
            if (!std::isfinite(v)) return false;
        }
        for (double v : l.bias) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

GradSet zeros_like(const ParamSet& params) {
    GradSet g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
}

void accumulate(GradSet& into, const GradSet& other) {
    if (into.layers.size() != other.layers.size()) throw DimensionError("gradient layer count mismatch");
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        auto& dst = into.layers[l];
        const auto& src = other.layers[l];
        if (dst.weight.size() != src.weight.size() || dst.bias.size() != src.bias.size()) {
            throw DimensionError("gradient shape mismatch at layer " + std::to_string(l));
        }
        auto& dw = dst.weight.values();
        const auto& sw = src.weight.values();
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += sw[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
    }
}

void check_shapes(const ParamSet& params, const NetworkSpec& spec) {
    if (params.layers.size() != spec.layers.size()) throw DimensionError("parameter/spec layer count mismatch");
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& p = params.layers[l];
        const auto& s = spec.layers[l];
        if (p.weight.rows() != s.out_size || p.weight.cols() != s.in_size || p.bias.size() != s.out_size) {
            throw DimensionError("parameter shape mismatch at layer " + std::to_string(l));
        }
    }
}

ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParamSet params;
    for (const auto& layer : spec.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_size + layer.out_size));
        std::uniform_real_distribution<double> dist(-limit, limit);
        LayerParams p{Matrix(layer.out_size, layer.in_size), std::vector<double>(layer.out_size, 0.0)};
        for (double& w : p.weight.values()) w = dist(rng);
        params.layers.push_back(std::move(p));
    }
    return params;
}

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid:
            if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
            else {
                const double e = std::exp(z);
                return e / (1.0 + e);
            }
        case Activation::linear: return z;
    }
    return z;
}

// Derivative expressed through the activation's output.
double activation_slope(Activation a, double out) {
    switch (a) {
        case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return out * (1.0 - out);
        case Activation::linear: return 1.0;
    }
    return 1.0;
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
    for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

void dense(const LayerParams& p, const Matrix& x, Matrix& z) {
    const std::size_t in = p.weight.cols();
    const std::size_t out = p.weight.rows();
    z = Matrix(x.rows(), out);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i).data();
        double* zi = z.row(i).data();
        for (std::size_t o = 0; o < out; ++o) zi[o] = p.bias[o] + dot(p.weight.row(o).data(), xi, in);
    }
}

void check_input(const Matrix& x, std::size_t width) {
    if (x.cols() != width) {
        throw DimensionError("input width " + std::to_string(x.cols()) + " does not match network input " +
                             std::to_string(width));
    }
    for (double v : x.values()) {
        if (!std::isfinite(v)) throw DimensionError("non-finite network input");
    }
}

}  // namespace

ForwardResult forward(const ParamSet& params, const NetworkSpec& spec, const Matrix& x, Mode mode, Rng& rng) {
    check_shapes(params, spec);
    check_input(x, spec.input_size());

    ForwardResult result;
    result.trace.mode = mode;
    result.trace.layers.resize(spec.layers.size());
    const Matrix* input = &x;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        auto& t = result.trace.layers[l];
        t.input = *input;
        dense(params.layers[l], t.input, t.pre);

        if (layer.activity_l2 > 0.0) {
            double sq = 0.0;
            for (double z : t.pre.values()) {
                const double a = activate(layer.activation, z);
                sq += a * a;
            }
            result.trace.activity_penalty += layer.activity_l2 * sq;
        }

        t.post = t.pre;
        if (mode == Mode::train && layer.dropout_rate > 0.0) {
            const double keep = 1.0 - layer.dropout_rate;
            const double scale = 1.0 / keep;
            std::uniform_real_distribution<double> u(0.0, 1.0);
            t.mask = Matrix(t.pre.rows(), t.pre.cols());
            auto& m = t.mask.values();
            auto& v = t.post.values();
            for (std::size_t i = 0; i < m.size(); ++i) {
                m[i] = u(rng) < keep ? scale : 0.0;
                v[i] *= m[i];
            }
        }
        for (double& v : t.post.values()) v = activate(layer.activation, v);
        input = &t.post;
    }
    result.output = result.trace.layers.back().post;
    return result;
}

Matrix predict(const ParamSet& params, const NetworkSpec& spec, const Matrix& x) {
    check_shapes(params, spec);
    check_input(x, spec.input_size());
    Matrix current = x;
    Matrix z;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        dense(params.layers[l], current, z);
        for (double& v : z.values()) v = activate(spec.layers[l].activation, v);
        std::swap(current, z);
    }
    return current;
}

BackwardResult backward(const ForwardTrace& trace, const ParamSet& params, const NetworkSpec& spec,
                        const Matrix& grad_out, double penalty_weight) {
    check_shapes(params, spec);
    if (trace.layers.size() != spec.layers.size()) throw DimensionError("trace depth does not match network");
    const auto& last = trace.layers.back().post;
    if (grad_out.rows() != last.rows() || grad_out.cols() != last.cols()) {
        throw DimensionError("output gradient shape does not match forward output");
    }

    BackwardResult result;
    result.grads = zeros_like(params);
    Matrix upstream = grad_out;
    for (std::size_t l = spec.layers.size(); l-- > 0;) {
        const auto& layer = spec.layers[l];
        const auto& t = trace.layers[l];
        const auto& p = params.layers[l];
        if (t.pre.cols() != layer.out_size || t.input.cols() != layer.in_size) {
            throw DimensionError("trace shape does not match layer " + std::to_string(l));
        }

        // upstream becomes d objective / d z
        auto& g = upstream.values();
        const auto& post = t.post.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_slope(layer.activation, post[i]);
        if (!t.mask.empty()) {
            const auto& m = t.mask.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i];
        }
        if (layer.activity_l2 > 0.0 && penalty_weight != 0.0) {
            const double coeff = 2.0 * layer.activity_l2 * penalty_weight;
            const auto& pre = t.pre.values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double a = activate(layer.activation, pre[i]);
                g[i] += coeff * a * activation_slope(layer.activation, a);
            }
        }

        auto& gp = result.grads.layers[l];
        const std::size_t in = layer.in_size;
        Matrix grad_input(t.input.rows(), in);
        for (std::size_t i = 0; i < upstream.rows(); ++i) {
            const double* xi = t.input.row(i).data();
            double* dxi = grad_input.row(i).data();
            const double* dzi = upstream.row(i).data();
            for (std::size_t o = 0; o < layer.out_size; ++o) {
                const double dz = dzi[o];
                if (dz == 0.0) continue;
                gp.bias[o] += dz;
                axpy(dz, xi, gp.weight.row(o).data(), in);
                axpy(dz, p.weight.row(o).data(), dxi, in);
            }
        }
        upstream = std::move(grad_input);
    }
    result.grad_input = std::move(upstream);
    return result;
}

LossGrad bce_loss(double pred, int label, ClassWeights weights) {
    const double p = std::clamp(pred, kProbabilityClamp, 1.0 - kProbabilityClamp);
    if (label == 1) return {-weights.w1 * std::log(p), -weights.w1 / p};
    return {-weights.w0 * std::log(1.0 - p), weights.w0 / (1.0 - p)};
}

LossGrad contrastive_loss(double distance, bool similar, double margin) {
    if (distance < 0.0) throw DimensionError("contrastive loss needs a nonnegative distance");
    if (!(margin > 0.0)) throw ConfigError("contrastive margin must be positive");
    if (similar) return {distance * distance, 2.0 * distance};
    const double gap = std::max(0.0, margin - distance);
    return {gap * gap, -2.0 * gap};
}

DistanceGrad euclidean_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("embedding length mismatch");
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        sq += diff * diff;
    }
    DistanceGrad r;
    r.distance = std::sqrt(std::max(sq, kDistanceFloor));
    r.grad_a.resize(a.size());
    r.grad_b.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        r.grad_a[k] = (a[k] - b[k]) / r.distance;
        r.grad_b[k] = -r.grad_a[k];
    }
    return r;
}

OptimizerState make_optimizer_state(OptimizerKind kind, const ParamSet& params) {
    OptimizerState state;
    state.kind = kind;
    if (kind == OptimizerKind::adam) state.first_moment = zeros_like(params);
    state.second_moment = zeros_like(params);
    return state;
}

namespace {

// Visits matching (param, grad, moment buffers) value arrays layer by layer.
template <typename Fn>
void for_each_buffer(ParamSet& params, const GradSet& grads, OptimizerState& state, Fn&& fn) {
    const bool adam = state.kind == OptimizerKind::adam;
    if (grads.layers.size() != params.layers.size() || state.second_moment.layers.size() != params.layers.size() ||
        (adam && state.first_moment.layers.size() != params.layers.size())) {
        throw DimensionError("optimizer buffers do not match parameters");
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        const auto& g = grads.layers[l];
        auto& v = state.second_moment.layers[l];
        if (g.weight.size() != p.weight.size() || g.bias.size() != p.bias.size() ||
            v.weight.size() != p.weight.size() || v.bias.size() != p.bias.size()) {
            throw DimensionError("optimizer shape mismatch at layer " + std::to_string(l));
        }
        std::vector<double>* m_w = nullptr;
        std::vector<double>* m_b = nullptr;
        if (adam) {
            auto& m = state.first_moment.layers[l];
            if (m.weight.size() != p.weight.size() || m.bias.size() != p.bias.size()) {
                throw DimensionError("optimizer shape mismatch at layer " + std::to_string(l));
            }
            m_w = &m.weight.values();
            m_b = &m.bias;
        }
        fn(p.weight.values(), g.weight.values(), m_w, v.weight.values());
        fn(p.bias, g.bias, m_b, v.bias);
    }
}

}  // namespace

void adam_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr) {
    if (state.kind != OptimizerKind::adam) throw ConfigError("adam_step called with non-adam state");
    const std::int64_t t = state.step_count + 1;
    const double correction1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
    for_each_buffer(params, grads, state,
                    [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>* m,
                        std::vector<double>& v) {
                        for (std::size_t i = 0; i < w.size(); ++i) {
                            (*m)[i] = kAdamBeta1 * (*m)[i] + (1.0 - kAdamBeta1) * g[i];
                            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
                            const double m_hat = (*m)[i] / correction1;
                            const double v_hat = v[i] / correction2;
                            w[i] -= lr * m_hat / (std::sqrt(v_hat) + kOptimizerEpsilon);
                        }
                    });
    state.step_count = t;
}

void rmsprop_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr) {
    if (state.kind != OptimizerKind::rmsprop) throw ConfigError("rmsprop_step called with non-rmsprop state");
    for_each_buffer(params, grads, state,
                    [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>*,
                        std::vector<double>& cache) {
                        for (std::size_t i = 0; i < w.size(); ++i) {
                            cache[i] = kRmsPropRho * cache[i] + (1.0 - kRmsPropRho) * g[i] * g[i];
                            w[i] -= lr * g[i] / (std::sqrt(cache[i]) + kOptimizerEpsilon);
                        }
                    });
    ++state.step_count;
}

void optimizer_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr) {
    if (state.kind == OptimizerKind::adam) {
        adam_step(params, grads, state, lr);
    } else {
        rmsprop_step(params, grads, state, lr);
    }
}

}  // namespace chd
