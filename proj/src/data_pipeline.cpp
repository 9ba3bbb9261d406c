#include "chd/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "chd/error.hpp"
#include "chd/random.hpp"
#include "chd/text_io.hpp"

namespace chd {

const char* to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::nominal: return "nominal";
        case ColumnKind::continuous: return "continuous";
        case ColumnKind::discrete: return "discrete";
    }
    return "unknown";
}

Schema framingham_schema() {
    using K = ColumnKind;
    return {
        {"male", K::nominal, false},
        {"age", K::continuous, false},
        {"education", K::discrete, false},
        {"currentSmoker", K::nominal, false},
        {"cigsPerDay", K::continuous, false},
        {"BPMeds", K::nominal, false},
        {"prevalentStroke", K::nominal, false},
        {"prevalentHyp", K::nominal, false},
        {"diabetes", K::nominal, false},
        {"totChol", K::continuous, false},
        {"sysBP", K::continuous, false},
        {"diaBP", K::continuous, false},
        {"BMI", K::continuous, false},
        {"heartRate", K::continuous, false},
        {"glucose", K::continuous, false},
        {"TenYearCHD", K::nominal, true},
    };
}

void validate_schema(const Schema& schema) {
    const auto labels = std::count_if(schema.begin(), schema.end(),
                                      [](const ColumnSpec& c) { return c.is_label; });
    if (labels != 1) {
        throw SchemaError("schema must have exactly one label column, found " + std::to_string(labels));
    }
}

std::size_t label_column(const Schema& schema) {
    const auto it = std::find_if(schema.begin(), schema.end(), [](const ColumnSpec& c) { return c.is_label; });
    return static_cast<std::size_t>(it - schema.begin());
}

std::size_t RawTable::missing_count(std::size_t column) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(),
                                                  [column](const auto& r) { return !r[column].has_value(); }));
}

std::size_t RawTable::missing_total() const {
    std::size_t total = 0;
    for (std::size_t c = 0; c < column_count(); ++c) total += missing_count(c);
    return total;
}

std::size_t FeatureTable::count_label(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

RawTable load_csv(const std::filesystem::path& path, const Schema& schema) {
    validate_schema(schema);
    std::ifstream in(path);
    if (!in) throw IoError("file not found: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("missing header row in " + path.string());
    const auto header = text::split(line);
    if (header.size() != schema.size()) {
        throw SchemaError("header has " + std::to_string(header.size()) + " columns, expected " +
                          std::to_string(schema.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
        // Some exports quote the header names.
        auto name = header[c];
        if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
        if (name != schema[c].name) {
            throw SchemaError("header mismatch at column " + std::to_string(c) + ": got '" + std::string(name) +
                              "', expected '" + schema[c].name + "'");
        }
    }

    const std::size_t label_col = label_column(schema);
    RawTable table{schema, {}};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != schema.size()) {
            throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(schema.size()));
        }
        std::vector<std::optional<double>> row(schema.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].empty() || cells[c] == "NA") continue;
            const auto value = text::parse_double(cells[c]);
            if (!value) {
                throw SchemaError("non-numeric token '" + std::string(cells[c]) + "' at line " +
                                  std::to_string(line_no) + ", column " + schema[c].name);
            }
            row[c] = *value;
        }
        if (!row[label_col]) {
            throw SchemaError("missing label at line " + std::to_string(line_no));
        }
        if (*row[label_col] != 0.0 && *row[label_col] != 1.0) {
            throw SchemaError("label must be 0 or 1 at line " + std::to_string(line_no));
        }
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) throw SchemaError("empty table: " + path.string());
    return table;
}

namespace {

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mode_of(const std::vector<double>& values) {
    std::map<double, std::size_t> counts;
    for (double v : values) ++counts[v];
    // std::map iterates ascending, so the first maximum is the smallest value.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

}  // namespace

RawTable impute(const RawTable& table) {
    validate_schema(table.schema);
    RawTable out = table;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        std::vector<double> present;
        present.reserve(table.row_count());
        for (const auto& row : table.rows) {
            if (row[c]) present.push_back(*row[c]);
        }
        if (present.size() == table.row_count()) continue;
        if (table.schema[c].is_label) throw SchemaError("label column has missing values");
        if (present.empty()) throw SchemaError("column '" + table.schema[c].name + "' is entirely missing");

        const double fill = table.schema[c].kind == ColumnKind::continuous ? median_of(std::move(present))
                                                                           : mode_of(present);
        for (auto& row : out.rows) {
            if (!row[c]) row[c] = fill;
        }
    }
    return out;
}

FeatureTable to_features(const RawTable& table) {
    validate_schema(table.schema);
    const std::size_t label_col = label_column(table.schema);
    FeatureTable ft;
    ft.label_name = table.schema[label_col].name;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        if (c != label_col) ft.schema.push_back(table.schema[c]);
    }
    ft.features = Matrix(table.row_count(), ft.schema.size());
    ft.labels.resize(table.row_count());
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        std::size_t out_col = 0;
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            const auto& cell = table.rows[r][c];
            if (!cell) {
                throw SchemaError("missing cell at row " + std::to_string(r) + ", column " + table.schema[c].name);
            }
            if (c == label_col) {
                ft.labels[r] = static_cast<int>(*cell);
            } else {
                ft.features(r, out_col++) = *cell;
            }
        }
    }
    return ft;
}

NormStats fit_norm(const FeatureTable& ft) {
    const std::size_t n = ft.rows();
    if (n < 2) throw DimensionError("fit_norm needs at least 2 rows");
    const std::size_t d = ft.width();
    NormStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t c = 0; c < d; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < n; ++r) sum += ft.features(r, c);
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double diff = ft.features(r, c) - mean;
            sq += diff * diff;
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std::max(std::sqrt(sq / static_cast<double>(n)), kStddevFloor);
    }
    return stats;
}

FeatureTable apply_norm(const FeatureTable& ft, const NormStats& stats) {
    if (stats.mean.size() != ft.width() || stats.stddev.size() != ft.width()) {
        throw DimensionError("normalization stats have " + std::to_string(stats.mean.size()) +
                             " columns, table has " + std::to_string(ft.width()));
    }
    FeatureTable out = ft;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
    }
    return out;
}

FeatureTable select_rows(const FeatureTable& ft, const std::vector<std::size_t>& indices) {
    FeatureTable out;
    out.schema = ft.schema;
    out.label_name = ft.label_name;
    out.features = gather_rows(ft.features, indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(ft.labels[i]);
    return out;
}

SplitResult stratified_split(const FeatureTable& ft, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
    Rng rng(seed);
    SplitResult result;
    for (int label : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t r = 0; r < ft.rows(); ++r) {
            if (ft.labels[r] == label) idx.push_back(r);
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        result.held_out_indices.insert(result.held_out_indices.end(), idx.begin(), idx.begin() + take);
        result.kept_indices.insert(result.kept_indices.end(), idx.begin() + take, idx.end());
    }
    std::sort(result.kept_indices.begin(), result.kept_indices.end());
    std::sort(result.held_out_indices.begin(), result.held_out_indices.end());
    result.kept = select_rows(ft, result.kept_indices);
    result.held_out = select_rows(ft, result.held_out_indices);
    return result;
}

FeatureTable synth_generate(std::size_t n, std::size_t d, double imbalance, std::uint64_t seed) {
    if (n < 2) throw ConfigError("synthetic table needs n >= 2");
    if (d < 1) throw ConfigError("synthetic table needs d >= 1");
    if (!(imbalance > 0.0 && imbalance < 1.0)) throw ConfigError("imbalance must lie in (0, 1)");

    auto positives = static_cast<std::size_t>(std::llround(imbalance * static_cast<double>(n)));
    positives = std::clamp<std::size_t>(positives, 1, n - 1);

    Rng rng(seed);
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    FeatureTable ft;
    ft.features = Matrix(n, d);
    ft.labels = std::move(labels);
    for (std::size_t r = 0; r < n; ++r) {
        const double shift = ft.labels[r] == 1 ? kSynthClassShift : 0.0;
        for (std::size_t c = 0; c < d; ++c) ft.features(r, c) = shift + noise(rng);
    }
    for (std::size_t c = 0; c < d; ++c) ft.schema.push_back({"x" + std::to_string(c), ColumnKind::continuous, false});
    ft.label_name = "label";
    return ft;
}

void save_feature_table(const FeatureTable& ft, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& col : ft.schema) out << col.name << ',';
    out << ft.label_name << '\n';
    for (std::size_t r = 0; r < ft.rows(); ++r) {
        for (double v : ft.features.row(r)) out << text::format_double(v) << ',';
        out << ft.labels[r] << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("missing header row in " + path.string());
    const auto header = text::split(line);
    if (header.size() < 2) throw SchemaError("feature table needs at least one feature and a label");

    // Recover column kinds when the names are the Framingham ones.
    const Schema known = framingham_schema();
    Schema schema;
    for (std::size_t c = 0; c < header.size(); ++c) {
        ColumnSpec spec{std::string(header[c]), ColumnKind::continuous, c + 1 == header.size()};
        for (const auto& k : known) {
            if (k.name == spec.name) spec.kind = k.kind;
        }
        schema.push_back(spec);
    }
    in.close();
    const RawTable raw = load_csv(path, schema);
    if (raw.missing_total() != 0) throw SchemaError("feature table contains missing cells: " + path.string());
    return to_features(raw);
}

void save_norm_stats(const NormStats& stats, const Schema& schema, const std::filesystem::path& path) {
    if (stats.mean.size() != schema.size()) throw DimensionError("stats/schema width mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "column,mean,stddev\n";
    for (std::size_t c = 0; c < schema.size(); ++c) {
        out << schema[c].name << ',' << text::format_double(stats.mean[c]) << ','
            << text::format_double(stats.stddev[c]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace chd
