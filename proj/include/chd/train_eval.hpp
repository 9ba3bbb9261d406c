#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chd/data_pipeline.hpp"
#include "chd/nn_engine.hpp"
#include "chd/pair_generation.hpp"
#include "chd/siamese_model.hpp"

namespace chd {

enum class LossKind { binary_cross_entropy, contrastive };

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    double learning_rate = 0.001;
    OptimizerKind optimizer = OptimizerKind::adam;
    LossKind loss = LossKind::binary_cross_entropy;
    std::optional<ClassWeights> class_weights;
    double val_fraction = 0.0;
    double margin = kDefaultMargin;
    double pair_threshold = kDefaultPairThreshold;
    std::uint64_t seed = 0;

    /// Adam 1e-3, weighted BCE (1, 5), batch 16, 250 epochs, 25% validation.
    static TrainConfig base_defaults();
    /// RMSProp 1e-3, contrastive loss, batch 64, 10 epochs, 25% validation.
    static TrainConfig siamese_defaults();

    void validate() const;
};

/// Per-epoch curves. Validation entries are NaN when no validation split
/// was requested. train_penalty is the activity-regularization share of
/// train_loss.
struct History {
    std::vector<double> train_loss;
    std::vector<double> train_acc;
    std::vector<double> val_loss;
    std::vector<double> val_acc;
    std::vector<double> train_penalty;

    std::size_t epochs() const { return train_loss.size(); }
};

/// Called after every epoch with the 1-based epoch number.
using EpochCallback = std::function<void(std::size_t epoch, const History&)>;

/// Dense(15->256, act-L2 0.01) Dropout(0.175) ReLU
/// Dense(256->256, act-L2 0.01) Dropout(0.175) ReLU
/// Dense(256->1, act-L2 0.01) Dropout(0.175) Sigmoid
NetworkSpec base_network_spec(std::size_t input_width = 15);

inline constexpr double kBaseDecisionThreshold = 0.5;

struct BaseTrainResult {
    NetworkSpec spec;
    ParamSet initial_params;
    ParamSet params;
    History history;
};

/// Trains the base classifier. A stratified val_fraction of `data` is held
/// out for the validation curves; the rest is reshuffled every epoch.
BaseTrainResult train_base(const TrainConfig& cfg, const FeatureTable& data, const EpochCallback& on_epoch = {},
                           const std::optional<NetworkSpec>& spec = std::nullopt);

struct SiameseTrainResult {
    SiameseModel model;
    History history;
};

/// Trains the twin network on `pairs`, holding out val_fraction of them.
SiameseTrainResult train_siamese(const TrainConfig& cfg, const PairSet& pairs, const EpochCallback& on_epoch = {},
                                 const std::optional<NetworkSpec>& spec = std::nullopt);

/// Rows are the true class, columns the prediction: [[TN, FP], [FN, TP]].
struct ConfusionMatrix {
    std::array<std::array<std::size_t, 2>, 2> cells{};

    std::size_t total() const { return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1]; }
    void add(int truth, int predicted) { ++cells[truth][predicted]; }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalReport {
    ConfusionMatrix matrix;
    double accuracy = 0.0;
    std::array<double, 2> precision{};
    std::array<double, 2> recall{};

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Derives the metrics; a ratio with a zero denominator is reported as 0.
EvalReport make_report(const ConfusionMatrix& cm);

EvalReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth);

/// Base network at the 0.5 sigmoid threshold.
EvalReport evaluate_classifier(const NetworkSpec& spec, const ParamSet& params, const FeatureTable& data);

/// Siamese network through classify() against the reference bank.
EvalReport evaluate_classifier(const SiameseModel& model, const ReferenceBank& bank, const FeatureTable& data,
                               Aggregator agg = Aggregator::mean);

/// Inference-mode distance of every pair, in pair order.
std::vector<double> pair_distances(const SiameseModel& model, const PairSet& pairs);

/// Pair-level matrix, "similar" as the positive class.
EvalReport evaluate_pairs(const SiameseModel& model, const PairSet& pairs);

/// Columns: epoch,train_loss,train_acc,val_loss,val_acc
void export_history(const History& h, const std::filesystem::path& path);
History read_history(const std::filesystem::path& path);

/// Human-readable block.
void write_report_text(std::ostream& out, const std::string& title, const EvalReport& r);
/// `prefix.key=value` lines.
void write_report_kv(std::ostream& out, const std::string& prefix, const EvalReport& r);

}  // namespace chd
