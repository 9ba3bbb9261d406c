#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "chd/data_pipeline.hpp"

namespace chd {

struct SamplePair {
    std::size_t left = 0;
    std::size_t right = 0;
    bool similar = false;

    friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

struct PairCounts {
    std::size_t diff = 0;
    std::size_t same0 = 0;
    std::size_t same1 = 0;

    std::size_t total() const { return diff + same0 + same1; }
    friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

/// Corpus defaults: 100k cross-class pairs, 50k same-class pairs per class.
inline constexpr PairCounts kDefaultPairCounts{100'000, 50'000, 50'000};
inline constexpr double kDefaultPairTrainFraction = 0.8;

/// Pairs of row indices into a shared source table.
struct PairSet {
    std::shared_ptr<const FeatureTable> source;
    std::vector<SamplePair> pairs;
    PairCounts counts;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

struct LabelIndex {
    std::vector<std::size_t> class0;
    std::vector<std::size_t> class1;
};

/// Row indices grouped by label, each group shuffled with `seed`.
LabelIndex split_by_label(const FeatureTable& ft, std::uint64_t seed);

/// Samples with replacement across pairs. Cross-class pairs come first, then
/// class-0 pairs, then class-1 pairs; the side holding the class-0 sample of
/// a cross-class pair is a coin flip. Same-class pairs never repeat a row.
PairSet generate_pairs(std::shared_ptr<const FeatureTable> ft, PairCounts counts, std::uint64_t seed);

struct PairSplit {
    PairSet train;
    PairSet test;
};

/// Shuffles, then takes the first round(fraction * N) pairs for training.
PairSplit split_pairs(const PairSet& ps, double fraction, std::uint64_t seed);

/// Recomputes (diff, same0, same1) from the pairs and the source labels.
PairCounts count_pairs(const FeatureTable& source, const std::vector<SamplePair>& pairs);

/// CSV with header `left_index,right_index,similar`.
void save_pairs(const PairSet& ps, const std::filesystem::path& path);

/// Reads a pair CSV against `source`; indices and flags are validated.
PairSet load_pairs(std::shared_ptr<const FeatureTable> source, const std::filesystem::path& path);

}  // namespace chd
