#include "chd/pair_generation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "chd/error.hpp"
#include "chd/random.hpp"
#include "chd/text_io.hpp"

namespace chd {

LabelIndex split_by_label(const FeatureTable& ft, std::uint64_t seed) {
    LabelIndex index;
    for (std::size_t r = 0; r < ft.rows(); ++r) {
        (ft.labels[r] == 0 ? index.class0 : index.class1).push_back(r);
    }
    Rng rng(seed);
    std::shuffle(index.class0.begin(), index.class0.end(), rng);
    std::shuffle(index.class1.begin(), index.class1.end(), rng);
    return index;
}

namespace {

std::size_t pick(const std::vector<std::size_t>& pool, Rng& rng) {
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    return pool[dist(rng)];
}

SamplePair same_class_pair(const std::vector<std::size_t>& pool, Rng& rng) {
    std::uniform_int_distribution<std::size_t> first(0, pool.size() - 1);
    std::uniform_int_distribution<std::size_t> second(0, pool.size() - 2);
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    return {pool[i], pool[j], true};
}

}  // namespace

PairSet generate_pairs(std::shared_ptr<const FeatureTable> ft, PairCounts counts, std::uint64_t seed) {
    if (!ft) throw ConfigError("generate_pairs needs a source table");
    const LabelIndex index = split_by_label(*ft, seed);
    if (counts.diff > 0 && (index.class0.empty() || index.class1.empty())) {
        throw ConfigError("cross-class pairs need both classes present");
    }
    if (counts.same0 > 0 && index.class0.size() < 2) throw ConfigError("class 0 has fewer than 2 samples");
    if (counts.same1 > 0 && index.class1.size() < 2) throw ConfigError("class 1 has fewer than 2 samples");

    Rng rng(derive_seed(seed, "pairs"));
    PairSet ps{ft, {}, counts};
    ps.pairs.reserve(counts.total());

    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < counts.diff; ++i) {
        const std::size_t a = pick(index.class0, rng);
        const std::size_t b = pick(index.class1, rng);
        ps.pairs.push_back(coin(rng) ? SamplePair{a, b, false} : SamplePair{b, a, false});
    }
    for (std::size_t i = 0; i < counts.same0; ++i) ps.pairs.push_back(same_class_pair(index.class0, rng));
    for (std::size_t i = 0; i < counts.same1; ++i) ps.pairs.push_back(same_class_pair(index.class1, rng));
    return ps;
}

PairCounts count_pairs(const FeatureTable& source, const std::vector<SamplePair>& pairs) {
    PairCounts counts;
    for (const auto& p : pairs) {
        if (!p.similar) {
            ++counts.diff;
        } else if (source.labels[p.left] == 0) {
            ++counts.same0;
        } else {
            ++counts.same1;
        }
    }
    return counts;
}

PairSplit split_pairs(const PairSet& ps, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("pair split fraction must lie in (0, 1)");
    if (!ps.source) throw ConfigError("pair set has no source table");
    std::vector<SamplePair> shuffled = ps.pairs;
    Rng rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(shuffled.size())));
    PairSplit split;
    split.train.source = ps.source;
    split.test.source = ps.source;
    split.train.pairs.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.pairs.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
    split.train.counts = count_pairs(*ps.source, split.train.pairs);
    split.test.counts = count_pairs(*ps.source, split.test.pairs);
    return split;
}

void save_pairs(const PairSet& ps, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "left_index,right_index,similar\n";
    for (const auto& p : ps.pairs) out << p.left << ',' << p.right << ',' << (p.similar ? 1 : 0) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

PairSet load_pairs(std::shared_ptr<const FeatureTable> source, const std::filesystem::path& path) {
    if (!source) throw ConfigError("load_pairs needs a source table");
    std::ifstream in(path);
    if (!in) throw IoError("file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "left_index,right_index,similar") {
        throw SchemaError("bad pair file header in " + path.string());
    }
    PairSet ps{source, {}, {}};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != 3) throw SchemaError("pair file line " + std::to_string(line_no) + " needs 3 cells");
        const auto l = text::parse_double(cells[0]);
        const auto r = text::parse_double(cells[1]);
        const auto s = text::parse_double(cells[2]);
        if (!l || !r || !s || *l < 0 || *r < 0 || *l >= static_cast<double>(source->rows()) ||
            *r >= static_cast<double>(source->rows()) || (*s != 0.0 && *s != 1.0)) {
            throw SchemaError("invalid pair at line " + std::to_string(line_no));
        }
        SamplePair p{static_cast<std::size_t>(*l), static_cast<std::size_t>(*r), *s == 1.0};
        if (p.similar != (source->labels[p.left] == source->labels[p.right])) {
            throw SchemaError("similar flag disagrees with labels at line " + std::to_string(line_no));
        }
        ps.pairs.push_back(p);
    }
    ps.counts = count_pairs(*source, ps.pairs);
    return ps;
}

}  // namespace chd
