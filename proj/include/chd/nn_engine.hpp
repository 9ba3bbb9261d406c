#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chd/matrix.hpp"
#include "chd/random.hpp"

namespace chd {

enum class Activation { relu, sigmoid, linear };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One dense layer. The forward order is fixed:
///   z = W x + b  ->  dropout(z)  ->  activation
/// For ReLU, dropout before or after the activation is the same map; for the
/// sigmoid output of the base network it matches the printed layer order.
/// The activity penalty is activity_l2 * sum(activation(z)^2), taken on the
/// un-dropped activation.
struct LayerSpec {
    std::size_t in_size = 0;
    std::size_t out_size = 0;
    Activation activation = Activation::linear;
    double dropout_rate = 0.0;
    double activity_l2 = 0.0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    /// Throws DimensionError/ConfigError on empty, zero-sized, mis-chained,
    /// or out-of-range dropout/regularization settings.
    void validate() const;
    std::size_t input_size() const { return layers.front().in_size; }
    std::size_t output_size() const { return layers.back().out_size; }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct LayerParams {
    Matrix weight;  // out_size x in_size
    std::vector<double> bias;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ParamSet {
    std::vector<LayerParams> layers;

    std::size_t parameter_count() const;
    bool all_finite() const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Gradients share the parameter layout.
using GradSet = ParamSet;

GradSet zeros_like(const ParamSet& params);
void accumulate(GradSet& into, const GradSet& other);

/// Throws DimensionError unless `params` has exactly the shapes `spec` implies.
void check_shapes(const ParamSet& params, const NetworkSpec& spec);

/// Glorot-uniform weights in (-L, L), L = sqrt(6 / (in + out)); zero biases.
ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed);

enum class Mode { train, infer };

struct LayerTrace {
    Matrix input;  // batch x in
    Matrix pre;    // z before dropout
    Matrix post;   // activation(dropout(z))
    Matrix mask;   // per-unit dropout scale (0 or 1/(1-rate)); empty when unused
};

struct ForwardTrace {
    Mode mode = Mode::infer;
    std::vector<LayerTrace> layers;
    /// Sum over the batch and all regularized layers of activity_l2 * sum(a^2).
    double activity_penalty = 0.0;
};

struct ForwardResult {
    Matrix output;
    ForwardTrace trace;
};

/// Batched forward pass; each row of `x` is one sample. The rng is only
/// consumed in train mode, and only by layers with nonzero dropout.
ForwardResult forward(const ParamSet& params, const NetworkSpec& spec, const Matrix& x, Mode mode, Rng& rng);

/// Inference-only forward pass that keeps no trace.
Matrix predict(const ParamSet& params, const NetworkSpec& spec, const Matrix& x);

struct BackwardResult {
    GradSet grads;
    Matrix grad_input;  // batch x in
};

/// Gradients of  sum(grad_out .* output) + penalty_weight * activity_penalty
/// with respect to every parameter and the input. Callers averaging a loss
/// over a batch of B pass grad_out already divided by B and penalty_weight
/// = 1/B.
BackwardResult backward(const ForwardTrace& trace, const ParamSet& params, const NetworkSpec& spec,
                        const Matrix& grad_out, double penalty_weight = 1.0);

struct LossGrad {
    double loss = 0.0;
    double grad = 0.0;
};

struct ClassWeights {
    double w0 = 1.0;
    double w1 = 1.0;

    friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Weighted binary cross-entropy on a probability; gradient is d loss / d pred.
LossGrad bce_loss(double pred, int label, ClassWeights weights = {});

/// d^2 for similar pairs, max(0, margin - d)^2 for dissimilar ones.
LossGrad contrastive_loss(double distance, bool similar, double margin);

inline constexpr double kDistanceFloor = 1e-12;

struct DistanceGrad {
    double distance = 0.0;
    std::vector<double> grad_a;
    std::vector<double> grad_b;
};

/// sqrt(max(|a - b|^2, kDistanceFloor)) and its gradients.
DistanceGrad euclidean_distance(std::span<const double> a, std::span<const double> b);

enum class OptimizerKind { adam, rmsprop };

const char* to_string(OptimizerKind k);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    std::int64_t step_count = 0;
    ParamSet first_moment;   // adam only
    ParamSet second_moment;  // adam second moment, or the rmsprop cache
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kRmsPropRho = 0.9;
inline constexpr double kOptimizerEpsilon = 1e-8;

OptimizerState make_optimizer_state(OptimizerKind kind, const ParamSet& params);

void adam_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr);
void rmsprop_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr);

/// Dispatches on state.kind.
void optimizer_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr);

// Checkpoint text format, version tag `chd-params 1`:
//   chd-params 1
//   layers <L>
//   layer <in> <out> <activation> <dropout_rate> <activity_l2>    (L lines)
//   then per layer: <out> lines of <in> weights, one line of <out> biases
// Numbers use the shortest round-trip decimal form.
void write_network(std::ostream& out, const NetworkSpec& spec, const ParamSet& params);
std::pair<NetworkSpec, ParamSet> read_network(std::istream& in);

void save_network(const std::filesystem::path& path, const NetworkSpec& spec, const ParamSet& params);
std::pair<NetworkSpec, ParamSet> load_network(const std::filesystem::path& path);

}  // namespace chd
