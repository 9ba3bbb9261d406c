#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "chd/data_pipeline.hpp"
#include "chd/nn_engine.hpp"

namespace chd {

inline constexpr double kDefaultMargin = 1.0;
inline constexpr double kDefaultPairThreshold = 0.5;
inline constexpr std::size_t kDefaultReferencesPerClass = 10;

/// 15 -> 256 -> 256 -> 256, ReLU throughout, dropout 0.2 after both hidden
/// layers and none on the embedding layer.
NetworkSpec siamese_network_spec(std::size_t input_width = 15);

/// Twin network. There is one ParamSet; both branches read it.
struct SiameseModel {
    NetworkSpec spec;
    ParamSet params;
    double margin = kDefaultMargin;
    double pair_threshold = kDefaultPairThreshold;

    std::size_t embedding_width() const { return spec.output_size(); }
};

SiameseModel make_siamese_model(const NetworkSpec& spec, std::uint64_t seed, double margin = kDefaultMargin,
                                double pair_threshold = kDefaultPairThreshold);

/// Batched pair forward. Row i of `left`/`right` is pair i.
struct PairForward {
    std::vector<double> distances;
    Matrix left_embedding;
    Matrix right_embedding;
    ForwardTrace left_trace;
    ForwardTrace right_trace;
};

/// Branch A's dropout masks are drawn before branch B's, from the same rng,
/// so the two branches never share a mask.
PairForward pair_forward(const SiameseModel& model, const Matrix& left, const Matrix& right, Mode mode, Rng& rng);

/// Single-pair convenience form, inference mode.
double pair_distance(const SiameseModel& model, std::span<const double> a, std::span<const double> b);

/// Sum of both branches' parameter gradients, given d loss / d distance for
/// every pair. `penalty_weight` scales any activity penalty of the branches.
GradSet pair_backward(const SiameseModel& model, const PairForward& fwd, std::span<const double> grad_distance,
                      double penalty_weight = 0.0);

/// true means "similar": distance strictly below the pair threshold.
bool pair_verdict(const SiameseModel& model, std::span<const double> a, std::span<const double> b);

struct ReferenceBank {
    Matrix refs0;  // k x width, class 0
    Matrix refs1;  // k x width, class 1

    std::size_t k() const { return refs0.rows(); }
    friend bool operator==(const ReferenceBank&, const ReferenceBank&) = default;
};

/// k rows per class, sampled without replacement.
ReferenceBank build_reference_bank(const FeatureTable& train, std::size_t k, std::uint64_t seed);

enum class Aggregator { mean, min };

struct Classification {
    int label = 0;
    double score0 = 0.0;  // aggregated distance to class-0 references
    double score1 = 0.0;
};

/// label = argmin over classes of the aggregated distance; exact ties go to
/// class 1.
Classification classify(const SiameseModel& model, const ReferenceBank& bank, std::span<const double> x,
                         Aggregator agg = Aggregator::mean);

/// Same as classify for every row, embedding the bank once.
std::vector<Classification> classify_batch(const SiameseModel& model, const ReferenceBank& bank, const Matrix& x,
                                           Aggregator agg = Aggregator::mean);

/// Aggregation step of classify on precomputed embeddings. Exposed for
/// checks that operate directly in embedding space.
Classification classify_embedding(std::span<const double> embedding, const Matrix& ref_embeddings0,
                                  const Matrix& ref_embeddings1, Aggregator agg = Aggregator::mean);

// Siamese checkpoint, version tag `chd-siamese 1`:
//   chd-siamese 1
//   margin <m>
//   pair_threshold <t>
//   <network block as written by write_network>
//   bank <k> <width>
//   <k rows of class-0 references>
//   <k rows of class-1 references>
// The bank section is optional (`bank 0 0` when absent).
void save_siamese(const std::filesystem::path& path, const SiameseModel& model, const ReferenceBank* bank);

struct SiameseCheckpoint {
    SiameseModel model;
    ReferenceBank bank;
};

SiameseCheckpoint load_siamese(const std::filesystem::path& path);

}  // namespace chd
