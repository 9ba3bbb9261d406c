#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chd/matrix.hpp"

namespace chd {

enum class ColumnKind { nominal, continuous, discrete };

const char* to_string(ColumnKind kind);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    bool is_label = false;

    friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

using Schema = std::vector<ColumnSpec>;

/// The sixteen Framingham columns in file order, TenYearCHD as the label.
Schema framingham_schema();

/// Throws SchemaError unless exactly one column is the label.
void validate_schema(const Schema& schema);

/// Index of the label column. Assumes a validated schema.
std::size_t label_column(const Schema& schema);

/// Cells as read from disk; std::nullopt marks a missing value.
struct RawTable {
    Schema schema;
    std::vector<std::vector<std::optional<double>>> rows;

    std::size_t row_count() const { return rows.size(); }
    std::size_t column_count() const { return schema.size(); }
    std::size_t missing_count(std::size_t column) const;
    std::size_t missing_total() const;

    friend bool operator==(const RawTable&, const RawTable&) = default;
};

struct FeatureTable {
    Matrix features;          // n x d
    std::vector<int> labels;  // 0 or 1
    Schema schema;            // feature columns only, in column order
    std::string label_name = "label";

    std::size_t rows() const { return features.rows(); }
    std::size_t width() const { return features.cols(); }
    std::size_t count_label(int label) const;

    friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kStddevFloor = 1e-8;

/// Reads a comma-separated file whose header must equal the schema names in
/// order. Empty cells and "NA" are missing; anything else must parse as a
/// number. Label cells must be present and be 0 or 1.
RawTable load_csv(const std::filesystem::path& path, const Schema& schema);

/// Median for continuous columns, mode (smallest value on ties) for nominal
/// and discrete columns. Present cells are never modified.
RawTable impute(const RawTable& table);

FeatureTable to_features(const RawTable& table);

/// Per-column mean and population standard deviation, floored at kStddevFloor.
NormStats fit_norm(const FeatureTable& ft);

FeatureTable apply_norm(const FeatureTable& ft, const NormStats& stats);

struct SplitResult {
    FeatureTable kept;
    FeatureTable held_out;
    std::vector<std::size_t> kept_indices;      // ascending row indices into the input
    std::vector<std::size_t> held_out_indices;  // ascending
};

/// Holds out round(fraction * n_c) rows of each class c, chosen by a seeded
/// shuffle. Both parts keep the input's relative row order.
SplitResult stratified_split(const FeatureTable& ft, double fraction, std::uint64_t seed);

/// Rows of `ft` at the given indices, in order.
FeatureTable select_rows(const FeatureTable& ft, const std::vector<std::size_t>& indices);

/// Two unit-variance Gaussian clusters: class 0 centred at the origin,
/// class 1 shifted by kSynthClassShift along every axis. Exactly
/// round(imbalance * n) rows (clamped to [1, n-1]) are class 1; row order is
/// shuffled.
FeatureTable synth_generate(std::size_t n, std::size_t d, double imbalance, std::uint64_t seed);

inline constexpr double kSynthClassShift = 1.0;

/// Writes features then the label as the final column, with a header row.
/// Values are printed with round-trip precision.
void save_feature_table(const FeatureTable& ft, const std::filesystem::path& path);

/// Reads a file written by save_feature_table. The last column is the label.
FeatureTable load_feature_table(const std::filesystem::path& path);

void save_norm_stats(const NormStats& stats, const Schema& schema, const std::filesystem::path& path);

}  // namespace chd
